"""Online PID gain adaptation: a 7-3-3 backprop network with a Lyapunov guard.

The network maps the normalized loop state

    x = [e(k), e(k-1), e(k-2), de(k), sp(k), pv(k), u(k-1)]

through one sigmoid hidden layer of 3 units to three sigmoid outputs; raw
gain n is sigma(r_n) * K_n,max. Emitted gains never leave
[baseline - d_max, baseline + d_max] ∩ [0, K_max], where baseline is the
relay-autotuned Ziegler-Nichols gain set. Training is gradient descent on
E(k) = 0.5*(sp - pv)^2 with the unknown plant Jacobian dpv/du replaced by
its configured sign. A Lyapunov monitor on V(k) = 0.5*e(k)^2 halves the
learning rate and pulls the emitted gains 50% toward the baseline whenever
V fails to decrease for 10 consecutive steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import GainSet


def _sigmoid(r: np.ndarray) -> np.ndarray:
    # clip keeps exp from overflowing on wild fuzzed inputs; saturation is
    # exact at |r| ~ 37 in float64 anyway
    return 1.0 / (1.0 + np.exp(-np.clip(r, -500.0, 500.0)))


@dataclass(frozen=True)
class InputScales:
    """Per-component normalization; sigmoids need inputs of order one."""

    error: float = 1.0    # divides e, e(k-1), e(k-2), de
    pv: float = 1.0       # divides sp and pv
    u: float = 1.0        # divides u(k-1)

    def vector(self, e: float, e1: float, e2: float, sp: float, pv: float, u_prev: float) -> np.ndarray:
        x = np.array(
            [e, e1, e2, e - e1, sp, pv, u_prev],
            dtype=float,
        )
        x[:4] /= self.error
        x[4:6] /= self.pv
        x[6] /= self.u
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite tuner input")
        return x


class TunerFault(RuntimeError):
    """Weights went non-finite; the loop should fall back to baseline gains."""


class NnTuner:
    """One 7-3-3 gain-scheduling network attached to a single PID loop."""

    N_IN = 7
    N_HID = 3
    N_OUT = 3

    def __init__(
        self,
        baseline: GainSet,
        k_max: tuple[float, float, float] | None = None,
        delta_max: tuple[float, float, float] | None = None,
        eta: float = 0.01,
        eta_floor: float = 1e-4,
        eta_ceiling: float = 0.1,
        scales: InputScales = InputScales(),
        seed: int = 0,
    ) -> None:
        self.baseline = baseline
        b = np.array([baseline.kp, baseline.ki, baseline.kd], dtype=float)
        # ceilings default to 2x baseline so zero weights emit the baseline itself
        self.k_max = np.array(k_max if k_max is not None else 2.0 * b, dtype=float)
        self.delta_max = np.array(delta_max if delta_max is not None else 0.5 * b, dtype=float)
        if np.any(self.k_max < 0) or np.any(self.delta_max < 0):
            raise ValueError("gain ceilings and clamp radii must be >= 0")
        self.lo = np.maximum(0.0, b - self.delta_max)
        self.hi = np.minimum(self.k_max, b + self.delta_max)
        self.eta = eta
        self.eta_floor = eta_floor
        self.eta_ceiling = eta_ceiling
        self.scales = scales
        self.deviation_scale = 1.0     # the Lyapunov guard halves this toward 0
        rng = np.random.default_rng(seed)
        self.w1 = rng.uniform(-0.3, 0.3, (self.N_IN, self.N_HID))
        self.b1 = rng.uniform(-0.3, 0.3, self.N_HID)
        self.w2 = rng.uniform(-0.3, 0.3, (self.N_HID, self.N_OUT))
        self.b2 = rng.uniform(-0.3, 0.3, self.N_OUT)

    # -- forward ---------------------------------------------------------

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = _sigmoid(x @ self.w1 + self.b1)
        r = z @ self.w2 + self.b2
        return z, r

    def emitted_gains(self, x: np.ndarray) -> np.ndarray:
        """Bounded (kp, ki, kd) for the current input; never leaves the clamp box."""
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2))):
            raise TunerFault("tuner weights are non-finite")
        _, r = self._forward(x)
        raw = _sigmoid(r) * self.k_max
        b = np.array([self.baseline.kp, self.baseline.ki, self.baseline.kd])
        dev = np.clip(raw - b, -self.delta_max, self.delta_max)
        return np.clip(b + self.deviation_scale * dev, self.lo, self.hi)

    def gains(self, x: np.ndarray) -> GainSet:
        g = self.emitted_gains(x)
        return GainSet(kp=float(g[0]), ki=float(g[1]), kd=float(g[2]), dt=self.baseline.dt)

    # -- training --------------------------------------------------------

    def gradients(
        self,
        x: np.ndarray,
        e: float,
        e1: float,
        e2: float,
        plant_sign: float,
        integral_active: bool = True,
        output_clamped: bool = False,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Backprop gradients of E = 0.5*e^2 wrt (w1, b1, w2, b2).

        dpv/du is replaced by plant_sign; du/dgain comes from the velocity
        PID law, with the integral column zeroed while anti-windup held it
        out and everything zeroed when the output clamp made du irrelevant.
        """
        z, r = self._forward(x)
        if output_clamped:
            du_dg = np.zeros(3)
        else:
            du_dg = np.array(
                [e - e1, e if integral_active else 0.0, e - 2.0 * e1 + e2]
            )
        sig = _sigmoid(r)
        raw = sig * self.k_max
        b = np.array([self.baseline.kp, self.baseline.ki, self.baseline.kd])
        dev = raw - b
        emitted = b + self.deviation_scale * np.clip(dev, -self.delta_max, self.delta_max)
        # clip/clamp kill the gradient where they are pinned
        active = (
            (np.abs(dev) < self.delta_max)
            & (emitted > self.lo) & (emitted < self.hi)
        ).astype(float)
        dg_dr = self.deviation_scale * sig * (1.0 - sig) * self.k_max * active
        delta_out = -e * plant_sign * du_dg * dg_dr            # dE/dr
        dw2 = np.outer(z, delta_out)
        db2 = delta_out
        delta_hid = (self.w2 @ delta_out) * z * (1.0 - z)
        dw1 = np.outer(x, delta_hid)
        db1 = delta_hid
        return dw1, db1, dw2, db2

    def train_step(
        self,
        x: np.ndarray,
        e: float,
        e1: float,
        e2: float,
        plant_sign: float,
        integral_active: bool = True,
        output_clamped: bool = False,
    ) -> None:
        """One gradient-descent update; magnitude is exactly eta * gradient."""
        dw1, db1, dw2, db2 = self.gradients(
            x, e, e1, e2, plant_sign, integral_active, output_clamped
        )
        self.w1 -= self.eta * dw1
        self.b1 -= self.eta * db1
        self.w2 -= self.eta * dw2
        self.b2 -= self.eta * db2

    # -- serialization (transfer bundles) --------------------------------

    def export_weights(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "eta": self.eta,
            "deviation_scale": self.deviation_scale,
        }

    def import_weights(self, snapshot: dict) -> None:
        w1 = np.asarray(snapshot["w1"], dtype=float)
        w2 = np.asarray(snapshot["w2"], dtype=float)
        b1 = np.asarray(snapshot["b1"], dtype=float)
        b2 = np.asarray(snapshot["b2"], dtype=float)
        if w1.shape != (self.N_IN, self.N_HID) or w2.shape != (self.N_HID, self.N_OUT):
            raise ValueError(f"weight snapshot shapes {w1.shape}/{w2.shape} do not fit a 7-3-3 net")
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.eta = float(snapshot.get("eta", self.eta))
        self.deviation_scale = float(snapshot.get("deviation_scale", 1.0))


@dataclass
class LyapunovMonitor:
    """Watchdog on V(k) = 0.5*e(k)^2 for one loop.

    M consecutive non-decreasing steps (with nonzero error) halve the
    learning rate (not below the floor) and halve the tuner's deviation
    from baseline; any decrease resets the counter and lets both recover.
    """

    m: int = 10
    counter: int = 0
    firings: int = 0
    recovery: float = 1.05

    def observe(self, e_k: float, e_next: float, net: NnTuner) -> bool:
        """Feed one realized error transition; returns True when the guard fired."""
        dv = 0.5 * e_next * e_next - 0.5 * e_k * e_k
        if dv < 0.0 or e_next == 0.0:
            self.counter = 0
            net.eta = min(net.eta * self.recovery, net.eta_ceiling)
            return False
        self.counter += 1
        if self.counter >= self.m:
            net.eta = max(net.eta * 0.5, net.eta_floor)
            # halving the deviation scale pulls emitted gains 50% toward the
            # baseline; it recovers only on re-tune, never automatically, so
            # a storm leaves the loop conservatively anchored
            net.deviation_scale *= 0.5
            self.counter = 0
            self.firings += 1
            return True
        return False
