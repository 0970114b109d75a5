"""Report rendering: delimited data files with sibling SVG figures.

Every plot has a CSV next to it carrying the raw numbers, so results stay
machine-checkable; the SVG is presentational only. Figures are rendered
with a fixed hash salt and no date metadata, which keeps the files
byte-stable across reruns of the same data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (5.0, 4.0),
    "figure.dpi": 110,
    "savefig.bbox": "tight",
    "svg.hashsalt": "abcforest",
    "axes.grid": True,
    "grid.alpha": 0.3,
})

MODEL_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """Plain UTF-8 CSV; reals in shortest round-trip form."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def save_method_errors(path_svg, names, errors) -> None:
    fig, ax = plt.subplots()
    ypos = np.arange(len(names))
    ax.barh(ypos, np.asarray(errors) * 100.0, color="#1f77b4")
    ax.set_yticks(ypos, names)
    ax.invert_yaxis()
    ax.set_xlabel("prior error rate (%)")
    _save(fig, path_svg)


def save_error_curve(path_svg, errors, final_label="out-of-bag") -> None:
    fig, ax = plt.subplots()
    n = np.arange(1, len(errors) + 1)
    ax.plot(n, np.asarray(errors) * 100.0, lw=1.2)
    ax.set_xlabel("number of trees")
    ax.set_ylabel(f"{final_label} error (%)")
    _save(fig, path_svg)


def save_importance(path_svg, names, values, top: int = 20) -> None:
    order = np.argsort(-np.asarray(values), kind="stable")[:top]
    fig, ax = plt.subplots()
    ypos = np.arange(order.size)
    ax.barh(ypos, np.asarray(values)[order], color="#2ca02c")
    ax.set_yticks(ypos, [names[i] for i in order])
    ax.invert_yaxis()
    ax.set_xlabel("mean impurity decrease")
    _save(fig, path_svg)


def save_discrepancy_scatter(path_svg, exact_p2, summary_p2, models) -> None:
    fig, ax = plt.subplots()
    models = np.asarray(models)
    for m in np.unique(models):
        sel = models == m
        ax.scatter(np.asarray(exact_p2)[sel], np.asarray(summary_p2)[sel],
                   s=6, alpha=0.5, color=MODEL_COLORS[(m - 1) % 10],
                   label=f"model {m}")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("posterior of MA(2) from the whole series")
    ax.set_ylabel("posterior of MA(2) from two autocorrelations")
    ax.legend(loc="upper left", frameon=False)
    _save(fig, path_svg)


def save_posterior_fidelity(path_svg, truth, estimate, agree_mask) -> None:
    fig, ax = plt.subplots()
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    agree = np.asarray(agree_mask)
    ax.scatter(truth[agree], estimate[agree], s=6, alpha=0.5, color="#1f77b4",
               label="selected = exact MAP")
    if np.any(~agree):
        ax.scatter(truth[~agree], estimate[~agree], s=8, alpha=0.8, color="black",
                   label="decision swap")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("exact posterior of the selected model")
    ax.set_ylabel("regression-forest estimate")
    ax.legend(loc="upper left", frameon=False)
    _save(fig, path_svg)


def save_projection(path_svg, coords, obs_coords, models, axis_names) -> None:
    coords = np.atleast_2d(np.asarray(coords))
    obs = np.asarray(obs_coords).ravel()
    models = np.asarray(models)
    fig, ax = plt.subplots()
    if coords.shape[1] == 1:
        for m in np.unique(models):
            ax.hist(coords[models == m, 0], bins=60, alpha=0.5,
                    color=MODEL_COLORS[(m - 1) % 10], label=f"model {m}")
        ax.axvline(obs[0], color="black", lw=2, label="observed")
        ax.set_xlabel(axis_names[0])
        ax.set_ylabel("count")
    else:
        for m in np.unique(models):
            sel = models == m
            ax.scatter(coords[sel, 0], coords[sel, 1], s=5, alpha=0.4,
                       color=MODEL_COLORS[(m - 1) % 10], label=f"model {m}")
        ax.scatter([obs[0]], [obs[1]], marker="*", s=220, color="black",
                   label="observed", zorder=5)
        ax.set_xlabel(axis_names[0])
        ax.set_ylabel(axis_names[1])
    ax.legend(loc="best", frameon=False)
    _save(fig, path_svg)


def save_calibration(path_svg, grid, raw, smoothed, selected_k) -> None:
    fig, ax = plt.subplots()
    ax.plot(grid, np.asarray(raw) * 100.0, "o-", color="black", label="validation error")
    ax.plot(grid, np.asarray(smoothed) * 100.0, "-", color="red", label="smoothed")
    ax.axvline(selected_k, color="red", ls=":", lw=1)
    ax.set_xlabel("k")
    ax.set_ylabel("error (%)")
    ax.set_xscale("log")
    ax.legend(frameon=False)
    _save(fig, path_svg)
