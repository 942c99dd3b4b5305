"""Named experiments: build artifacts in memory, then write them with a digest manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .compound import SequencePlan, compound_survival, convergence_sweep, instantaneous_rate, rate_finite_difference
from .config import ExperimentConfig
from .exceptions import OutputError, ValidationError
from .fitting import LorentzianRegressor, fit_exponential, lorentzian
from .golden_rule import (
    DiscretizedContinuumModel,
    channel_rates,
    exact_survival,
    fgr_rate,
    format_model_file,
    lineshape,
    multi_channel_survival,
    short_time_coefficients,
)
from .operators import DensityOperator, Projector, make_density_from_ket, make_projector, sigma_y
from .stochastic import (
    InteriorEnsembleConfig,
    SurvivalCurve,
    derive_seed,
    ensemble_survival,
    make_rng,
    sample_random_unitary,
    splitmix64,
    write_csv,
)
from .svgplot import render_svg

HASH_NAME = "sha256"


@dataclass(frozen=True)
class RunManifest:
    config: dict
    artifacts: dict  # filename -> hex digest
    tool_version: str
    duration_s: float
    output_dir: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "artifacts": [{"file": k, HASH_NAME: v} for k, v in sorted(self.artifacts.items())],
                "hash": HASH_NAME,
                "tool_version": self.tool_version,
                "duration_s": self.duration_s,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


# -- shared builders ---------------------------------------------------------------


def random_hermitian(dim, rng, norm=1.0):
    """Gaussian Hermitian matrix rescaled to spectral norm ``norm``."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = 0.5 * (z + z.conj().T)
    s = np.max(np.abs(np.linalg.eigvalsh(h)))
    return h * (norm / s) if s > 0 else h


def random_commuting_case(dim, rank, rng):
    """``(lam, rho, H)`` with ``rho`` inside the range of ``lam`` and ``H`` commuting with ``lam``."""
    q = sample_random_unitary(dim, rng)
    lam = q[:, :rank] @ q[:, :rank].conj().T
    p = rng.dirichlet(np.ones(rank))
    rho = (q[:, :rank] * p) @ q[:, :rank].conj().T
    block = np.zeros((dim, dim), complex)
    block[:rank, :rank] = random_hermitian(rank, rng)
    if dim > rank:
        block[rank:, rank:] = random_hermitian(dim - rank, rng)
    h = q @ block @ q.conj().T
    return Projector(lam, rank), DensityOperator(rho), 0.5 * (h + h.conj().T)


def two_level_example(g):
    """``(|+z><+z|, |+x><+x|, g sigma_y)``: instantaneous rate ``g / hbar``."""
    return make_projector([[1, 0]]), make_density_from_ket([1, 1]), g * sigma_y


def model_from_config(cfg: ExperimentConfig) -> DiscretizedContinuumModel:
    p = cfg.params
    m = p["M"]
    if cfg.couplings:
        if p.get("v") is not None:
            raise ValidationError("give either 'v' or coupling lines, not both")
        v = np.zeros(m, complex)
        labels = ["0"] * m
        for idx, lab, val in cfg.couplings:
            if not 0 <= idx < m:
                raise ValidationError(f"coupling index {idx} outside 0..{m - 1}")
            v[idx] = val
            labels[idx] = lab
        return DiscretizedContinuumModel(p["E_i"], p["W"], m, v, tuple(labels), p["hbar"])
    if cfg.experiment == "channels" and p.get("v") is None:
        even = np.arange(m) % 2 == 0
        v = np.where(even, p["v_k"], p["v_l"]).astype(complex)
        labels = tuple("k" if e else "l" for e in even)
        return DiscretizedContinuumModel(p["E_i"], p["W"], m, v, labels, p["hbar"])
    v = 0.01 if p.get("v") is None else p["v"]
    return DiscretizedContinuumModel(p["E_i"], p["W"], m, v, (), p["hbar"])


def ensemble_config(cfg: ExperimentConfig) -> InteriorEnsembleConfig:
    p = cfg.params
    h = None
    if p["h_scale"] > 0:
        h = random_hermitian(p["dim"], make_rng(splitmix64(cfg.seed)), p["h_scale"])
    return InteriorEnsembleConfig(
        dim=p["dim"],
        undecayed_rank=p["rank"],
        mode=p["mode"],
        drift_strength=p["gamma"],
        update_policy=p["update_policy"],
        hamiltonian=h,
        seed=cfg.seed,
        hbar=p["hbar"],
    )


def prepare(cfg: ExperimentConfig):
    """Validate ``cfg`` against the owning module's preconditions; returns the built objects."""
    p = cfg.params
    name = cfg.experiment
    if name == "qze":
        if not p["rank"] < p["dim"]:
            raise ValidationError("rank must be smaller than dim")
        return SequencePlan(p["t_max"], p["steps"])
    if name == "compound":
        return two_level_example(p["g"])
    if name == "ensemble":
        ecfg = ensemble_config(cfg)
        plan = SequencePlan(p["t"], p["steps"])
        lo, hi = _ensemble_window(cfg)
        if not lo < hi:
            raise ValidationError("fit window must satisfy fit_t_min < fit_t_max")
        return ecfg, plan
    model = model_from_config(cfg)
    if name == "fgr" and not p["fit_t_min"] < p["fit_t_max"]:
        raise ValidationError("fit window must satisfy fit_t_min < fit_t_max")
    return model


def _ensemble_window(cfg):
    p = cfg.params
    lo = 0.05 * p["t"] if p["fit_t_min"] is None else p["fit_t_min"]
    hi = p["t"] if p["fit_t_max"] is None else p["fit_t_max"]
    return lo, hi


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


# -- experiments -------------------------------------------------------------------


def _qze(cfg, plan):
    p = cfg.params
    times = np.linspace(0, p["t_max"], p["n_times"])[1:]
    surv = np.empty((p["n_cases"], times.size))
    for i in range(p["n_cases"]):
        lam, rho, h = random_commuting_case(p["dim"], p["rank"], make_rng(derive_seed(cfg.seed, i)))
        for j, t in enumerate(times):
            surv[i, j] = compound_survival(lam, rho, h, SequencePlan(t, p["steps"]))
    mean = surv.mean(axis=0)
    err = surv.std(axis=0, ddof=1) / math.sqrt(p["n_cases"]) if p["n_cases"] > 1 else np.zeros_like(mean)
    curve = SurvivalCurve(np.concatenate([[0.0], times]), np.concatenate([[1.0], mean]),
                          np.concatenate([[0.0], err]))
    summary = {
        "min_survival": float(surv.min()),
        "max_deviation_from_one": float(np.max(np.abs(1 - surv))),
        "steps": p["steps"],
        "n_cases": p["n_cases"],
    }
    plot = render_svg({"compound survival": (curve.t, curve.mean)}, title="Commuting (Zeno) sequence",
                      xlabel="t", ylabel="survival")
    return {"qze_survival.csv": curve.to_csv(), "summary.json": summary, "qze_survival.svg": plot}


def _compound(cfg, objects):
    lam, rho, h = objects
    p = cfg.params
    ideal = convergence_sweep(lam, rho, h, p["t"], p["n_values"], p["hbar"], branch="idealized")
    literal = convergence_sweep(lam, rho, h, p["t"], p["n_values"], p["hbar"], branch="literal")
    n = [r[0] for r in ideal.rows]
    csv = write_csv(
        ["N", "survival_idealized", "error_idealized", "survival_literal", "error_literal"],
        [n, [r[1] for r in ideal.rows], [r[2] for r in ideal.rows],
         [r[1] for r in literal.rows], [r[2] for r in literal.rows]],
    )
    errs = ideal.errors()
    summary = {
        "formula_rate": instantaneous_rate(lam, rho, h, p["hbar"]).rate,
        "finite_difference_rate": rate_finite_difference(lam, rho, h, 1e-4, p["hbar"]).rate,
        "limit": math.exp(-ideal.rate * p["t"]),
        "idealized_error_ratios": [float(a / b) if b > 0 else None for a, b in zip(errs, errs[1:])],
        "n_ratios": [b / a for a, b in zip(n, n[1:])],
        "decaying": ideal.decaying,
    }
    plot = render_svg(
        {"idealized |error|": (n, np.maximum(errs, 1e-300)),
         "literal |error|": (n, np.maximum(literal.errors(), 1e-300))},
        title="Compound survival convergence", xlabel="N", ylabel="|survival - exp(-rate t)|", log_y=True,
    )
    return {"compound_sweep.csv": csv, "summary.json": summary, "compound_sweep.svg": plot}


def _ensemble(cfg, objects):
    ecfg, plan = objects
    curve = ensemble_survival(ecfg, plan, cfg.params["n_traj"])
    window = _ensemble_window(cfg)
    fit = fit_exponential(curve, window)
    sel = (curve.t >= window[0]) & (curve.t <= window[1])
    summary = {
        "fit_rate": fit.rate,
        "fit_tau": fit.tau if math.isfinite(fit.tau) else "inf",
        "rms_log_residual": fit.rms_log_residual,
        "window": list(fit.window),
        "sequence_average_rate": curve.diagnostics["sequence_average_rate"],
        "n_terminated": curve.diagnostics["n_terminated"],
        "final_mean": float(curve.mean[-1]),
        "final_stderr": float(curve.stderr[-1]),
        "n_traj": curve.n_traj,
    }
    series = {"ensemble mean": (curve.t, curve.mean)}
    if fit.rate > 0:
        series["exp fit"] = (curve.t[sel], np.exp(fit.intercept - fit.rate * curve.t[sel]))
    plot = render_svg(series, title=f"{ecfg.mode} ensemble ({ecfg.update_policy})", xlabel="t",
                      ylabel="survival", log_y=True)
    return {"ensemble_survival.csv": curve.to_csv(), "summary.json": summary, "ensemble_survival.svg": plot}


def _fgr(cfg, model):
    p = cfg.params
    t = np.linspace(0, p["t_max"], p["n_times"])
    exact = exact_survival(model, t)
    gamma = fgr_rate(model).rate
    fit = fit_exponential(exact, (p["fit_t_min"], p["fit_t_max"]))
    csv = write_csv(["t", "exact", "fgr_exponential"], [t, exact.mean, np.exp(-gamma * t)])
    rates = write_csv(["quantity", "value"], [
        ["formula_rate", "fitted_rate", "relative_difference"],
        [gamma, fit.rate, abs(fit.rate - gamma) / gamma if gamma > 0 else math.nan],
    ])
    summary = {
        "formula_rate": gamma,
        "fitted_rate": fit.rate,
        "relative_difference": abs(fit.rate - gamma) / gamma if gamma > 0 else None,
        "fit_window": list(fit.window),
        "rms_log_residual": fit.rms_log_residual,
        "heisenberg_time": model.heisenberg_time,
    }
    plot = render_svg({"exact": (t, exact.mean), "exp(-Gamma t)": (t, np.exp(-gamma * t))},
                      title="Exact survival vs golden rule", xlabel="t", ylabel="survival", log_y=True)
    return {"fgr_survival.csv": csv, "fgr_rates.csv": rates, "summary.json": summary,
            "fgr_survival.svg": plot, "model.txt": format_model_file(model)}


def _channels(cfg, model):
    p = cfg.params
    per = channel_rates(model)
    total = fgr_rate(model).rate
    rates = [e.rate for _, e in per]
    t = np.linspace(0, p["t_max"], p["n_times"])
    product = np.array([multi_channel_survival(rates, x) for x in t])
    csv_rates = write_csv(
        ["channel", "rate", "levels", "channel_density", "below_resonance"],
        [[lab for lab, _ in per], rates, [e.diagnostics["levels"] for _, e in per],
         [e.diagnostics["channel_density"] for _, e in per],
         [str(e.diagnostics["below_resonance"]).lower() for _, e in per]],
    )
    exact = exact_survival(model, t).mean
    csv_curve = write_csv(["t", "channel_product", "total_exponential", "exact"],
                          [t, product, np.exp(-t * sum(rates)), exact])
    summary = {
        "channel_rates": {lab: e.rate for lab, e in per},
        "total_rate": total,
        "sum_of_channel_rates": float(sum(rates)),
        "additivity_error": abs(sum(rates) - total),
        "max_product_vs_exponential": float(np.max(np.abs(product - np.exp(-t * sum(rates))))),
    }
    plot = render_svg({"channel product": (t, product), "exact": (t, exact)},
                      title="Two-channel survival", xlabel="t", ylabel="survival", log_y=True)
    return {"channel_rates.csv": csv_rates, "channel_survival.csv": csv_curve, "summary.json": summary,
            "channel_survival.svg": plot, "model.txt": format_model_file(model)}


def _lineshape(cfg, model):
    t = cfg.params["t"]
    e, pop = lineshape(model, t)
    est = LorentzianRegressor().fit(e, pop)
    gamma = fgr_rate(model).rate
    survival = float(exact_survival(model, [t]).mean[0])
    csv = write_csv(["E", "population", "lorentzian"], [e, pop, est.predict(e)])
    summary = {
        "t": t,
        "center": est.center_,
        "fwhm": est.fwhm_,
        "amplitude": est.amplitude_,
        "rms_residual": est.rms_residual_,
        "hbar_gamma_fgr": model.hbar * gamma,
        "fwhm_over_hbar_gamma": est.fwhm_ / (model.hbar * gamma) if gamma > 0 else None,
        "population_sum_plus_survival": float(pop.sum()) + survival,
    }
    plot = render_svg({"populations": (e, pop), "Lorentzian fit": (e, lorentzian(e, est.amplitude_, est.center_, est.fwhm_))},
                      title=f"Continuum populations at t = {t:g}", xlabel="E", ylabel="population")
    return {"lineshape.csv": csv, "summary.json": summary, "lineshape.svg": plot,
            "model.txt": format_model_file(model)}


def _contrast(cfg, model):
    p = cfg.params
    t = np.linspace(0, p["t_max"], p["n_times"])
    exact = exact_survival(model, t).mean
    gamma = fgr_rate(model).rate
    _, var = short_time_coefficients(model)
    quad = 1 - var * t**2 / model.hbar**2
    csv = write_csv(["t", "exact", "exponential", "quadratic"], [t, exact, np.exp(-gamma * t), quad])
    summary = {"fgr_rate": gamma, "energy_variance": var,
               "zeno_time": model.hbar / math.sqrt(var) if var > 0 else "inf"}
    plot = render_svg({"exact": (t, exact), "exp(-Gamma t)": (t, np.exp(-gamma * t)),
                       "1 - dH^2 t^2": (t, quad)},
                      title="Unitary survival vs exponential vs quadratic", xlabel="t", ylabel="survival", log_y=True)
    return {"contrast.csv": csv, "summary.json": summary, "contrast.svg": plot,
            "model.txt": format_model_file(model)}


_RUNNERS = {
    "qze": _qze,
    "compound": _compound,
    "ensemble": _ensemble,
    "fgr": _fgr,
    "channels": _channels,
    "lineshape": _lineshape,
    "contrast": _contrast,
}


def build_artifacts(cfg: ExperimentConfig) -> dict:
    """Compute every artifact of ``cfg`` in memory as ``{filename: bytes}``."""
    objects = prepare(cfg)
    produced = _RUNNERS[cfg.experiment](cfg, objects)
    out = {}
    for name, content in produced.items():
        if isinstance(content, dict):
            content = _json(content)
        elif isinstance(content, str):
            content = content.encode()
        out[name] = content
    return out


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> RunManifest:
    """Run ``cfg`` and write its artifacts plus ``manifest.json`` to the output directory.

    Nothing is written unless every artifact was produced successfully.
    """
    start = time.perf_counter()
    output_dir = os.fspath(output_dir if output_dir is not None else cfg.output_dir)
    artifacts = build_artifacts(cfg)
    digests = {name: hashlib.new(HASH_NAME, data).hexdigest() for name, data in artifacts.items()}
    try:
        os.makedirs(output_dir, exist_ok=True)
        for name, data in artifacts.items():
            with open(os.path.join(output_dir, name), "wb") as fh:
                fh.write(data)
    except OSError as exc:
        raise OutputError(f"cannot write artifacts to {output_dir}: {exc}") from exc
    manifest = RunManifest(
        config=cfg.echo(),
        artifacts=digests,
        tool_version=__version__,
        duration_s=round(time.perf_counter() - start, 6),
        output_dir=output_dir,
    )
    try:
        with open(os.path.join(output_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(manifest.to_json())
    except OSError as exc:
        raise OutputError(f"cannot write manifest to {output_dir}: {exc}") from exc
    return manifest
