"""Render static figures from a finished run directory.

Reads the manifest and the delimited artifacts, writes one figure file per
plot next to them.  The run path itself stays data-only; figure rendering is
a separate, repeatable post-processing step (``grsd report`` or
``grsd run --figures``).
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _read_csv(path: Path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for line in lines[1:]:
        for h, tok in zip(header, line.split(",")):
            cols[h].append(tok)
    return header, cols


def _floats(cols, name):
    return np.array([float(x) for x in cols[name]])


def _save(fig, out: Path):
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def _fig_power_law(run: Path, fmt: str):
    header, cols = _read_csv(run / "shells.csv")
    fit = json.loads((run / "fit.json").read_text())
    lam = _floats(cols, "lambda_center")
    v = _floats(cols, "v")
    t = _floats(cols, "t")
    keep = np.isfinite(v) & (v > 0)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    mid_t = np.unique(t)[len(np.unique(t)) // 2]
    sel = keep & (t == mid_t)
    ax.loglog(lam[sel], v[sel], "o", ms=4, label=f"recovered v (t={mid_t:.3g})")
    xs = np.array(sorted(lam[sel]))
    a = fit["a"]
    c = float(np.mean(fit["c_series"]))
    ax.loglog(xs, c * xs ** a, "-", label=f"fit: {c:.3g} $\\lambda^{{{a:.3g}}}$")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("velocity")
    ax.legend()
    ax.set_title("Recovered transport velocity")
    return [_save(fig, run / f"fig_power_law.{fmt}")]


def _fig_condition_suite(run: Path, fmt: str):
    out = []
    report = json.loads((run / "condition_report.json").read_text())
    names = list(report["conditions"])
    scores = [report["conditions"][n]["score"] for n in names]
    thresholds = [report["conditions"][n]["threshold"] for n in names]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    x = np.arange(len(names))
    ax.bar(x - 0.17, scores, width=0.34, label="score")
    ax.bar(x + 0.17, thresholds, width=0.34, label="threshold")
    ax.set_yscale("log")
    ax.set_xticks(x, [n.replace("_", "\n") for n in names], fontsize=8)
    ax.legend()
    ax.set_title("Condition scores vs thresholds")
    out.append(_save(fig, run / f"fig_conditions.{fmt}"))

    header, cols = _read_csv(run / "envelope.csv")
    t = _floats(cols, "t")
    k = _floats(cols, "k").astype(int)
    u = _floats(cols, "u_k")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for tv in np.unique(t)[:: max(1, len(np.unique(t)) // 5)]:
        sel = t == tv
        ax.semilogy(k[sel][1:], np.maximum(u[sel][1:], 1e-300), lw=1,
                    label=f"t={tv:.2g}")
    ax.set_xlabel("block distance k")
    ax.set_ylabel(r"envelope $u_k$")
    ax.legend(fontsize=7)
    ax.set_title("Cross-block coherence envelope")
    out.append(_save(fig, run / f"fig_envelope.{fmt}"))

    header, cols = _read_csv(run / "couplings.csv")
    bi = _floats(cols, "bin_i").astype(int)
    power = _floats(cols, "power")
    nb = np.unique(bi).size
    mat = power.reshape(nb, nb)
    fig, ax = plt.subplots(figsize=(4.6, 4))
    im = ax.imshow(mat, origin="lower", cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("bin j")
    ax.set_ylabel("bin i")
    ax.set_title("Window bin couplings")
    out.append(_save(fig, run / f"fig_couplings.{fmt}"))
    return out


def _fig_depth_sweep(run: Path, fmt: str):
    out = []
    header, cols = _read_csv(run / "stationarity_trend.csv")
    L = _floats(cols, "L")
    err = _floats(cols, "err_bulk")
    depths = np.unique(L)
    means = [err[L == d].mean() for d in depths]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(L, err, "o", ms=3, alpha=0.4, label="per seed")
    ax.loglog(depths, means, "s-", label="mean")
    ax.set_xlabel("depth L")
    ax.set_ylabel("stationarity error")
    ax.legend()
    ax.set_title("Log-shift invariance vs depth")
    out.append(_save(fig, run / f"fig_stationarity_trend.{fmt}"))

    header, cols = _read_csv(run / "berry_esseen.csv")
    L = _floats(cols, "L")
    ks = _floats(cols, "KS")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(L, ks, "o-", label="measured KS")
    ref = ks[0] * (L / L[0]) ** -0.5
    ax.loglog(L, ref, "--", label=r"$L^{-1/2}$ reference")
    ax.set_xlabel("depth L")
    ax.set_ylabel("KS distance")
    ax.legend()
    ax.set_title("Normal-approximation error vs depth")
    out.append(_save(fig, run / f"fig_berry_esseen.{fmt}"))

    header, cols = _read_csv(run / "dilution.csv")
    L = _floats(cols, "L")
    bd = _floats(cols, "err_boundary")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(L, bd, "o-", label="boundary contribution")
    ax.loglog(L, bd[0] * (L / L[0]) ** -1.0, "--", label=r"$1/L$ reference")
    ax.set_xlabel("depth L")
    ax.set_ylabel("sup |boundary couplings|")
    ax.legend()
    ax.set_title("Boundary dilution under depth averaging")
    out.append(_save(fig, run / f"fig_dilution.{fmt}"))
    return out


def _fig_mixing(run: Path, fmt: str):
    out = []
    header, cols = _read_csv(run / "mixing_curves.csv")
    eps = _floats(cols, "epsilon")
    layer = _floats(cols, "layer")
    d = _floats(cols, "d")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for e in np.unique(eps):
        sel = eps == e
        ax.semilogy(layer[sel], d[sel], lw=1.2, label=f"eps={e:g}")
    ax.set_xlabel("layer")
    ax.set_ylabel("second-moment distance d")
    ax.legend()
    ax.set_title("Directional isotropization")
    out.append(_save(fig, run / f"fig_mixing_curves.{fmt}"))

    header, cols = _read_csv(run / "mixing.csv")
    eps = _floats(cols, "epsilon")
    tau = _floats(cols, "tau_mix")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(eps, tau, "o-", label=r"measured $\tau$")
    ax.loglog(eps, tau[0] * (eps / eps[0]) ** -2.0, "--",
              label=r"$\epsilon^{-2}$ reference")
    ax.set_xlabel(r"$\epsilon$")
    ax.set_ylabel("mixing time")
    ax.legend()
    ax.set_title("Mixing time scaling")
    out.append(_save(fig, run / f"fig_mixing_scaling.{fmt}"))
    return out


def _fig_gronwall(run: Path, fmt: str):
    header, cols = _read_csv(run / "gronwall.csv")
    margin = _floats(cols, "margin")
    rate_est = _floats(cols, "rate_estimate")
    c_rho = _floats(cols, "C_rho")
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 4))
    axes[0].hist(margin, bins=12)
    axes[0].set_xlabel("envelope margin")
    axes[0].set_title("Growth-bound margins")
    axes[1].plot(c_rho, rate_est, "o")
    lim = max(c_rho.max(), rate_est.max()) * 1.1
    axes[1].plot([0, lim], [0, lim], "--", lw=1)
    axes[1].set_xlabel(r"bound $C_\rho$")
    axes[1].set_ylabel("measured growth rate")
    axes[1].set_title("Measured rate vs bound")
    return [_save(fig, run / f"fig_gronwall.{fmt}")]


def _fig_covariance(run: Path, fmt: str):
    header, cols = _read_csv(run / "covariance.csv")
    models = cols["model"]
    alphas = _floats(cols, "alpha")
    dev = _floats(cols, "deviation")
    names = sorted(set(models))
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / len(names)
    uniq_a = np.unique(alphas)
    for i, name in enumerate(names):
        sel = np.array([m == name for m in models])
        xs = np.array([np.flatnonzero(uniq_a == a)[0] for a in alphas[sel]])
        ax.bar(xs + i * width, np.maximum(dev[sel], 1e-18), width=width, label=name)
    ax.set_yscale("log")
    ax.set_xticks(np.arange(uniq_a.size) + 0.4, [f"{a:g}" for a in uniq_a])
    ax.set_xlabel("loss scale alpha")
    ax.set_ylabel("max deviation")
    ax.legend(fontsize=8)
    ax.set_title("Time-rescaling covariance deviation")
    return [_save(fig, run / f"fig_covariance.{fmt}")]


_RENDERERS = {
    "power-law-recovery": _fig_power_law,
    "condition-suite": _fig_condition_suite,
    "residual-depth-sweep": _fig_depth_sweep,
    "mixing-sweep": _fig_mixing,
    "gronwall-check": _fig_gronwall,
    "covariance-check": _fig_covariance,
}


def render_run(run_dir, fmt: str = "png") -> list:
    """Render the figure set for a finished run; returns the file paths."""
    run = Path(run_dir)
    manifest_path = run / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {run}")
    manifest = json.loads(manifest_path.read_text())
    name = manifest["recipe"]["name"]
    try:
        renderer = _RENDERERS[name]
    except KeyError:
        raise FileNotFoundError(f"no renderer for recipe {name!r}")
    return renderer(run, fmt)
