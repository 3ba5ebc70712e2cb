"""A small neural network that retunes PID gains online, safely.

A 7-3-3 sigmoid network watches the loop (error, its differences, the
setpoint, the output) and emits (kp, ki, kd). Two hard rules make this
safe enough to run unattended:

  1. Emitted gains are clamped to a box around the tuned baseline; the
     network can nudge, never replace, the gains the relay tune earned.
  2. A Lyapunov watchdog on V = e^2/2 halves the learning rate and the
     deviation band whenever error grows for 10 straight samples.
"""

import numpy as np

from greenloop.control import GainSet
from greenloop.nntuner import LyapunovMonitor, NnTuner

baseline = GainSet(kp=2.0, ki=0.20, kd=0.50, dt=1.0)
net = NnTuner(baseline, seed=7)
print(f"baseline gains     kp={baseline.kp} ki={baseline.ki} kd={baseline.kd}")
print(f"clamp box          kp [{net.lo[0]:.2f}, {net.hi[0]:.2f}], "
      f"ki [{net.lo[1]:.2f}, {net.hi[1]:.2f}], "
      f"kd [{net.lo[2]:.2f}, {net.hi[2]:.2f}]")

# whatever the inputs, emitted gains stay inside the box
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(2000):
    x = rng.normal(0.0, 5.0, 7)
    g = net.emitted_gains(x)
    worst = max(worst, float(np.max(g - net.hi)), float(np.max(net.lo - g)))
print(f"2000 random inputs: worst excursion past the box = {max(worst, 0.0):.2e}")

# training moves weights by exactly eta * gradient, so learning is slow
# and bounded; here we let it chew on a persistent positive error
x = np.array([1.0, 0.2, 0.1, 0.0, 22.0, 21.0, 0.5])
before = net.emitted_gains(x).copy()
for _ in range(50):
    net.train_step(x, e=1.0, e1=0.8, e2=0.7, plant_sign=1.0)
after = net.emitted_gains(x)
print(f"\n50 training steps on a persistent error:")
print(f"  kp {before[0]:.3f} -> {after[0]:.3f}, "
      f"ki {before[1]:.3f} -> {after[1]:.3f} (still inside the box)")

# now the watchdog: feed it a diverging error sequence
mon = LyapunovMonitor()
e = 0.5
fired_at = None
for k in range(40):
    e_next = e * 1.12           # error growing 12% per sample
    if mon.observe(e, e_next, net) and fired_at is None:
        fired_at = k
    e = e_next
print(f"\ndiverging loop: guard fired at sample {fired_at}, "
      f"firings={mon.firings}")
print(f"  learning rate cut to {net.eta:.4f}, "
      f"deviation scale cut to {net.deviation_scale:.2f}")
print(f"  emitted gains pulled toward baseline: kp {net.emitted_gains(x)[0]:.3f}")

# a healthy loop lets the learning rate drift back up
for _ in range(200):
    mon.observe(0.5, 0.4, net)
print(f"after 200 healthy samples eta recovered to {net.eta:.4f} "
      f"(deviation scale stays at {net.deviation_scale:.2f} until re-tune)")
