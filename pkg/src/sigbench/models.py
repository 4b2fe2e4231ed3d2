"""Reference forecasters with hand-derived gradients.

Four model classes map an H-sample history to an F-sample forecast:

* ``linear``: a single affine map.
* ``dlinear``: moving-average decomposition into trend + seasonal parts, each
  forecast by its own affine map.
* ``fits``: rFFT of the history, a dense complex-linear map from the kept
  low-frequency bins to the full output spectrum, amplitude rescaling by
  (H+F)/H, then inverse rFFT; the forecast is the extrapolated tail.
* ``mlp``: two hidden ReLU layers (widths 256 and 512 by default).

Every class exposes ``loss_and_grads`` returning the batch MSE and exact
analytic gradients for all parameters; complex weights are treated as
independent real and imaginary parts threaded through the fixed FFT
transforms. The training loss is mean squared error, averaged over both the
horizon and the batch, so the single-window gradient of the plain affine map
is (2/F) * residual @ history^T.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .dsp import moving_average

MODEL_NAMES = ("linear", "dlinear", "fits", "mlp")


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _as_batch(x: np.ndarray, H: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != H:
        raise ValueError(f"history must have length {H}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("history contains non-finite values")
    return x, single


class Forecaster:
    """Base class: parameter bookkeeping shared by all model families."""

    name: str = "base"

    def __init__(self, history_len: int, horizon: int):
        if history_len < 1 or horizon < 1:
            raise ValueError("history_len and horizon must be positive")
        self.H = int(history_len)
        self.F = int(horizon)
        self.params: dict[str, np.ndarray] = {}

    # -- forward / gradients ------------------------------------------------
    def _forward_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grads_batch(self, X: np.ndarray, G: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given dLoss/dPred = G (same shape as the output)."""
        raise NotImplementedError

    def forward(self, history: np.ndarray) -> np.ndarray:
        """Forecast for one history vector or a batch of them."""
        X, single = _as_batch(history, self.H)
        pred = self._forward_batch(X)
        return pred[0] if single else pred

    def loss_and_grads(self, X: np.ndarray, Y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Batch MSE and its exact gradient for every parameter."""
        X, _ = _as_batch(X, self.H)
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[None, :]
        if Y.shape != (X.shape[0], self.F):
            raise ValueError(f"target shape {Y.shape} does not match ({X.shape[0]}, {self.F})")
        pred = self._forward_batch(X)
        resid = pred - Y
        loss = float(np.mean(resid * resid))
        G = 2.0 * resid / resid.size
        return loss, self._grads_batch(X, G)

    # -- parameter plumbing -------------------------------------------------
    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for k, v in params.items():
            self.params[k][...] = v

    def architecture(self) -> dict:
        return {"model": self.name, "history_len": self.H, "horizon": self.F}

    def to_state(self) -> dict:
        return {
            "architecture": self.architecture(),
            "params": {
                k: {"shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
                for k, v in self.params.items()
            },
        }


class LinearModel(Forecaster):
    """Plain affine forecaster: pred = W @ history + b."""

    name = "linear"

    def __init__(self, history_len: int, horizon: int, seed: int = 0):
        super().__init__(history_len, horizon)
        rng = np.random.default_rng(seed)
        self.params = {
            "W": _uniform_init(rng, (self.F, self.H), self.H),
            "b": _uniform_init(rng, (self.F,), self.H),
        }

    def _forward_batch(self, X):
        return X @ self.params["W"].T + self.params["b"]

    def _grads_batch(self, X, G):
        return {"W": G.T @ X, "b": G.sum(axis=0)}


class DLinearModel(Forecaster):
    """Decomposition forecaster: affine maps on trend and seasonal parts.

    The trend is a centered moving average of the history (edge replication),
    the seasonal part is the residual, so trend + seasonal reconstructs the
    history exactly.
    """

    name = "dlinear"

    def __init__(self, history_len: int, horizon: int, kernel_size: int = 15, seed: int = 0):
        super().__init__(history_len, horizon)
        if kernel_size % 2 == 0 or kernel_size < 1 or kernel_size > history_len:
            raise ValueError(f"kernel_size must be odd, >= 1 and <= {history_len}, got {kernel_size}")
        self.kernel_size = int(kernel_size)
        rng = np.random.default_rng(seed)
        self.params = {
            "W_trend": _uniform_init(rng, (self.F, self.H), self.H),
            "b_trend": _uniform_init(rng, (self.F,), self.H),
            "W_seasonal": _uniform_init(rng, (self.F, self.H), self.H),
            "b_seasonal": _uniform_init(rng, (self.F,), self.H),
        }

    def decompose(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        trend = moving_average(X, self.kernel_size)
        return trend, X - trend

    def _forward_batch(self, X):
        trend, seasonal = self.decompose(X)
        p = self.params
        return trend @ p["W_trend"].T + p["b_trend"] + seasonal @ p["W_seasonal"].T + p["b_seasonal"]

    def _grads_batch(self, X, G):
        trend, seasonal = self.decompose(X)
        return {
            "W_trend": G.T @ trend,
            "b_trend": G.sum(axis=0),
            "W_seasonal": G.T @ seasonal,
            "b_seasonal": G.sum(axis=0),
        }

    def architecture(self):
        return {**super().architecture(), "kernel_size": self.kernel_size}


class FitsModel(Forecaster):
    """Complex frequency-domain interpolation forecaster.

    The history spectrum is truncated at min(cutoff, Nyquist); a dense complex
    matrix maps the kept K_in bins to all K_out = (H+F)//2 + 1 bins of the
    extended window, whose inverse rFFT (scaled by (H+F)/H) yields H+F samples;
    the last F are the forecast. The fixed rFFT/irFFT transforms are realized
    as probed real matrices so gradients are plain transposes.
    """

    name = "fits"

    def __init__(
        self,
        history_len: int,
        horizon: int,
        sample_rate_hz: float = 10.0,
        cutoff_hz: float = 15.0,
        seed: int = 0,
        init_noise: float = 0.01,
    ):
        super().__init__(history_len, horizon)
        self.sample_rate_hz = float(sample_rate_hz)
        self.cutoff_hz = float(cutoff_hz)
        nyquist = self.sample_rate_hz / 2.0
        effective = min(self.cutoff_hz, nyquist)
        # Bin k of the H-point rFFT sits at k * fs / H.
        self.k_in = min(int(np.floor(effective * self.H / self.sample_rate_hz)) + 1, self.H // 2 + 1)
        self.out_len = self.H + self.F
        self.k_out = self.out_len // 2 + 1
        self.ratio = self.out_len / self.H

        # Probe the fixed transforms as real-linear maps.
        eye_h = np.eye(self.H)
        rfft_full = np.fft.rfft(eye_h, axis=-1).T  # (H//2+1, H), column n = rfft(e_n)
        self._R_re = np.ascontiguousarray(rfft_full.real[: self.k_in])
        self._R_im = np.ascontiguousarray(rfft_full.imag[: self.k_in])
        eye_k = np.eye(self.k_out)
        self._T_re = np.fft.irfft(eye_k, n=self.out_len, axis=-1).T  # (out_len, k_out)
        self._T_im = np.fft.irfft(1j * eye_k, n=self.out_len, axis=-1).T

        rng = np.random.default_rng(seed)
        c_re = rng.uniform(-init_noise, init_noise, size=(self.k_out, self.k_in))
        c_im = rng.uniform(-init_noise, init_noise, size=(self.k_out, self.k_in))
        # Bin-wise identity embedding: input bin k (at k*fs/H) lands on the
        # output bin at the same frequency, k * out_len / H.
        for k in range(self.k_in):
            j = int(round(k * self.out_len / self.H))
            if j < self.k_out:
                c_re[j, k] += 1.0
        self.params = {"C_re": c_re, "C_im": c_im}

    def _spectra(self, X):
        x_re = X @ self._R_re.T
        x_im = X @ self._R_im.T
        return x_re, x_im

    def _forward_batch(self, X):
        x_re, x_im = self._spectra(X)
        c_re, c_im = self.params["C_re"], self.params["C_im"]
        z_re = x_re @ c_re.T - x_im @ c_im.T
        z_im = x_im @ c_re.T + x_re @ c_im.T
        full = (z_re @ self._T_re.T + z_im @ self._T_im.T) * self.ratio
        return full[:, self.H :]

    def _grads_batch(self, X, G):
        x_re, x_im = self._spectra(X)
        g_full = np.zeros((X.shape[0], self.out_len))
        g_full[:, self.H :] = G * self.ratio
        dz_re = g_full @ self._T_re
        dz_im = g_full @ self._T_im
        return {
            "C_re": dz_re.T @ x_re + dz_im.T @ x_im,
            "C_im": dz_im.T @ x_re - dz_re.T @ x_im,
        }

    def architecture(self):
        return {
            **super().architecture(),
            "sample_rate_hz": self.sample_rate_hz,
            "cutoff_hz": self.cutoff_hz,
            "k_in": self.k_in,
            "k_out": self.k_out,
        }


class MlpModel(Forecaster):
    """Two hidden ReLU layers; the ReLU subgradient at exactly 0 is 0."""

    name = "mlp"

    def __init__(self, history_len: int, horizon: int, hidden: tuple[int, int] = (256, 512), seed: int = 0):
        super().__init__(history_len, horizon)
        h1, h2 = int(hidden[0]), int(hidden[1])
        if h1 < 1 or h2 < 1:
            raise ValueError(f"hidden widths must be positive, got {hidden}")
        self.hidden = (h1, h2)
        rng = np.random.default_rng(seed)
        self.params = {
            "W1": _uniform_init(rng, (h1, self.H), self.H),
            "b1": _uniform_init(rng, (h1,), self.H),
            "W2": _uniform_init(rng, (h2, h1), h1),
            "b2": _uniform_init(rng, (h2,), h1),
            "W3": _uniform_init(rng, (self.F, h2), h2),
            "b3": _uniform_init(rng, (self.F,), h2),
        }

    def _hidden_acts(self, X):
        p = self.params
        z1 = X @ p["W1"].T + p["b1"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ p["W2"].T + p["b2"]
        a2 = np.maximum(z2, 0.0)
        return z1, a1, z2, a2

    def _forward_batch(self, X):
        _, _, _, a2 = self._hidden_acts(X)
        return a2 @ self.params["W3"].T + self.params["b3"]

    def _grads_batch(self, X, G):
        p = self.params
        z1, a1, z2, a2 = self._hidden_acts(X)
        d2 = (G @ p["W3"]) * (z2 > 0.0)
        d1 = (d2 @ p["W2"]) * (z1 > 0.0)
        return {
            "W3": G.T @ a2,
            "b3": G.sum(axis=0),
            "W2": d2.T @ a1,
            "b2": d2.sum(axis=0),
            "W1": d1.T @ X,
            "b1": d1.sum(axis=0),
        }

    def architecture(self):
        return {**super().architecture(), "hidden": list(self.hidden)}


def build_model(name: str, history_len: int, horizon: int, seed: int = 0, **kwargs) -> Forecaster:
    """Construct a forecaster by registry name."""
    if name == "linear":
        return LinearModel(history_len, horizon, seed=seed)
    if name == "dlinear":
        return DLinearModel(history_len, horizon, seed=seed, **kwargs)
    if name == "fits":
        return FitsModel(history_len, horizon, seed=seed, **kwargs)
    if name == "mlp":
        return MlpModel(history_len, horizon, seed=seed, **kwargs)
    raise ValueError(f"unknown model {name!r}, expected one of {MODEL_NAMES}")


def model_from_state(state: dict) -> Forecaster:
    """Rebuild a forecaster from checkpoint state, bit-exactly."""
    arch = dict(state["architecture"])
    name = arch.pop("model")
    H = int(arch.pop("history_len"))
    F = int(arch.pop("horizon"))
    kwargs = {}
    if name == "dlinear":
        kwargs["kernel_size"] = int(arch["kernel_size"])
    elif name == "fits":
        kwargs["sample_rate_hz"] = float(arch["sample_rate_hz"])
        kwargs["cutoff_hz"] = float(arch["cutoff_hz"])
    elif name == "mlp":
        kwargs["hidden"] = tuple(arch["hidden"])
    model = build_model(name, H, F, **kwargs)
    for key, entry in state["params"].items():
        values = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        model.params[key][...] = values
    return model


def save_checkpoint(model: Forecaster, directory: str, name: str | None = None) -> str:
    """Write ``model_<name>.json`` with architecture and flat parameter arrays."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"model_{name or model.name}.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(model.to_state(), fh, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str) -> Forecaster:
    with open(path, encoding="utf-8") as fh:
        return model_from_state(json.load(fh))
