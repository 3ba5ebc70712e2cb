"""Closed-loop edge climate controller for controlled-environment agriculture.

Cascading VPD control: an outer setpoint optimizer decomposes a VPD target
into the energy-cheapest (T, RH) pair, inner PID loops (relay-autotuned,
neural-network-adapted) drive the actuators, and a progressive autonomy
engine mediates between alerts, recommendations, and guardrailed autonomous
action. Everything is validated against the built-in zone simulator.
"""

__version__ = "0.1.0"
