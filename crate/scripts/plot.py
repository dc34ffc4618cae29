#!/usr/bin/env python3
"""Render figures from fairmdp CSV output.

usage: plot.py RUN_DIR [--pareto PARETO_CSV] [--out DIR]
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def group_rewards(run: Path, out: Path) -> None:
    df = pd.read_csv(run / "group_rewards.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for col in [c for c in df.columns if c.startswith("group_")]:
        ax.plot(df["t"], df[col], label=col.replace("_", " "))
    ax.plot(df["t"], df["total"], "k--", label="total")
    ax.set_xlabel("iteration")
    ax.set_ylabel("average reward per step")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "group_rewards.png", dpi=150)


def occupancy(run: Path, out: Path) -> None:
    df = pd.read_csv(run / "occupancy.csv")
    fig, ax = plt.subplots(figsize=(7, 4))
    x = range(len(df))
    ax.bar([i - 0.2 for i in x], df["unconstrained"], width=0.4, label="unconstrained")
    ax.bar([i + 0.2 for i in x], df["fair"], width=0.4, label="fair mixture")
    labels = [f"{s}\n(g{g})" if pd.notna(g) else str(s) for s, g in zip(df["state"], df["group"])]
    ax.set_xticks(list(x), labels, fontsize=7)
    ax.set_ylabel("occupancy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "occupancy.png", dpi=150)


def pareto(path: Path, out: Path) -> None:
    df = pd.read_csv(path).dropna(subset=["total"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(df["alpha_per_step"], df["total"], "o-", label="total")
    for col in [c for c in df.columns if c.startswith("group_")]:
        ax.plot(df["alpha_per_step"], df[col], ".--", label=col.replace("_", " "))
    ax.set_xlabel("threshold per step")
    ax.set_ylabel("average reward per step")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "pareto.png", dpi=150)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", type=Path, nargs="?")
    ap.add_argument("--pareto", type=Path)
    ap.add_argument("--out", type=Path, default=Path("figures"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.run_dir:
        group_rewards(args.run_dir, args.out)
        occupancy(args.run_dir, args.out)
    if args.pareto:
        pareto(args.pareto, args.out)


if __name__ == "__main__":
    main()
