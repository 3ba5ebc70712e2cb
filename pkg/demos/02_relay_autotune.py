"""Relay-feedback auto-tuning against a first-order-plus-dead-time plant.

Instead of hand-picking PID gains, drive the actuator with a relay and
let the plant settle into a limit cycle. The oscillation amplitude and
period give the ultimate gain Ku = 4h/(pi*a) and period Tu, and the
Ziegler-Nichols rules turn those into gains. For a FOPDT plant the
describing-function prediction is known in closed form, so we can check
the identification against theory.
"""

import math

from greenloop.control import VelocityPid, relay_autotune

K, TAU, LAG = 1.0, 120.0, 10.0   # the classic benchmark plant


class Plant:
    def __init__(self, dt=1.0):
        self.y = 0.0
        self.dt = dt
        self.pipe = [0.0] * int(round(LAG / dt))

    def step(self, u):
        self.pipe.append(u)
        self.y += (K * self.pipe.pop(0) - self.y) / TAU * self.dt
        return self.y


# theory: the limit cycle sits where the plant phase hits -180 degrees
w = math.pi / 2.0
for _ in range(60):
    w = (math.pi - math.atan(w * TAU)) / LAG
ku_theory = math.sqrt(1.0 + (w * TAU) ** 2) / K
tu_theory = 2.0 * math.pi / w
print(f"describing function predicts Ku = {ku_theory:.2f}, Tu = {tu_theory:.1f} s")

plant = Plant()
res = relay_autotune(lambda u: plant.step(u), sp=0.5, h=1.0, sim_dt=1.0,
                     control_dt=1.0, max_duration=1800.0, u_bias=0.5)
print(f"relay measured          Ku = {res.ku:.2f}, Tu = {res.tu:.1f} s "
      f"({res.duration:.0f} simulated seconds, quality {res.quality!r})")
print(f"errors: Ku {abs(res.ku - ku_theory) / ku_theory:.1%}, "
      f"Tu {abs(res.tu - tu_theory) / tu_theory:.1%}")

# close the loop with the tuned gains and step the setpoint
g = res.gains
print(f"\nZN gains: kp={g.kp:.2f} ki={g.ki:.3f} kd={g.kd:.1f} (dt={g.dt:g}s)")
pid = VelocityPid(u_min=0.0, u_max=2.0)
fresh = Plant()
worst_tail = 0.0
for t in range(900):
    _, u = pid.step(g, sp=1.0, pv=fresh.y)
    fresh.step(u)
    if t >= 780:
        worst_tail = max(worst_tail, abs(1.0 - fresh.y))
print(f"closed-loop step to 1.0: max |error| over the last 2 minutes "
      f"= {worst_tail:.4f}")
