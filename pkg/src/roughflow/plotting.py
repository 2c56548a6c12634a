"""Optional PNG rendering of run artifacts (``--figures``).

The CSV files remain the primary output; figures are a convenience layer and
matplotlib is imported only when this module is used.
"""

from __future__ import annotations

import os

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _read(filename):
    return np.genfromtxt(filename, delimiter=",", names=True)


def _save(fig, out_dir, name):
    # no timestamps in the PNG metadata so reruns stay byte-identical
    fig.savefig(os.path.join(out_dir, name), dpi=100, metadata={"Software": None})
    return name


def render_figures(out_dir, scenario, names):
    """Render whatever plots the emitted CSVs support; returns new file names."""
    plt = _pyplot()
    made = []
    have = set(names)
    if "level1.csv" in have:
        d = _read(os.path.join(out_dir, "level1.csv"))
        fig, ax = plt.subplots()
        for col in d.dtype.names[1:]:
            ax.plot(d["t"], d[col], label=col)
        ax.set_xlabel("t")
        ax.legend()
        made.append(_save(fig, out_dir, "driver.png"))
        plt.close(fig)
    if "trajectories.csv" in have:
        d = _read(os.path.join(out_dir, "trajectories.csv"))
        fig, ax = plt.subplots()
        cols = d.dtype.names
        for pid in np.unique(d["particle_id"]):
            sel = d["particle_id"] == pid
            if len(cols) > 3:
                ax.plot(d[cols[2]][sel], d[cols[3]][sel], lw=0.8)
            else:
                ax.plot(d["t"][sel], d[cols[2]][sel], lw=0.8)
        made.append(_save(fig, out_dir, "trajectories.png"))
        plt.close(fig)
    if "invariants.csv" in have:
        d = _read(os.path.join(out_dir, "invariants.csv"))
        fig, ax = plt.subplots()
        for col in d.dtype.names[1:]:
            v = d[col]
            scale = abs(v[0]) if abs(v[0]) > 1e-12 else 1.0
            ax.plot(d["t"], (v - v[0]) / scale, label=col)
        ax.set_xlabel("t")
        ax.set_ylabel("relative drift")
        ax.legend()
        made.append(_save(fig, out_dir, "invariants.png"))
        plt.close(fig)
    if "snapshots.csv" in have:
        d = _read(os.path.join(out_dir, "snapshots.csv"))
        last = d[d["t"] == d["t"][-1]]
        fig, ax = plt.subplots()
        if "omega" in d.dtype.names:
            n = int(round(np.sqrt(last.size)))
            im = ax.imshow(last["omega"].reshape(n, n).T, origin="lower", extent=(0, 2 * np.pi, 0, 2 * np.pi))
            fig.colorbar(im, ax=ax)
        else:
            first = d[d["t"] == d["t"][0]]
            ax.plot(first["x"], first["u"], label="t=0")
            ax.plot(last["x"], last["u"], label=f"t={last['t'][0]:g}")
            ax.legend()
        made.append(_save(fig, out_dir, "state.png"))
        plt.close(fig)
    if "wong_zakai.csv" in have:
        d = _read(os.path.join(out_dir, "wong_zakai.csv"))
        fig, ax = plt.subplots()
        ax.loglog(np.atleast_1d(d["pieces_fine"]), np.atleast_1d(d["distance"]), "o-")
        ax.set_xlabel("linear pieces per interval")
        ax.set_ylabel("successive sup distance")
        made.append(_save(fig, out_dir, "wong_zakai.png"))
        plt.close(fig)
    return made
