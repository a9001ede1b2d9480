"""Matplotlib figures written to files next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_ber(curves: dict, path, title: str = "", block: bool = False) -> None:
    """Semilog BER (or BLER) against Eb/N0, one line per decoder."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name, records in curves.items():
        xs = [r.ebn0_db for r in records]
        ys = [r.bler if block else r.ber for r in records]
        pts = [(x, y) for x, y in zip(xs, ys) if y > 0]
        if not pts:
            continue
        ax.semilogy(*zip(*pts), marker="o", label=name)
    ax.set_xlabel("Eb/N0 [dB]")
    ax.set_ylabel("BLER" if block else "BER")
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_ne(values: dict, path, baseline: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(values)
    ax.bar(names, [values[n] for n in names])
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_ylabel(f"NE vs {baseline}" if baseline else "NE")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_latency(rows: list, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    Ns = [r["N"] for r in rows]
    for key in ("scl", "bp", "pnn"):
        ax.loglog(Ns, [r[key] for r in rows], marker="o", base=2, label=key.upper())
    ax.set_xlabel("N")
    ax.set_ylabel("synchronization steps")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
