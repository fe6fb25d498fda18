"""Regenerate src/carmaspot/data/stable_quantiles.npz from the density inversion."""

from pathlib import Path

import numpy as np

from carmaspot.stable import build_quantile_table

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "carmaspot" / "data" / "stable_quantiles.npz"
    table = build_quantile_table()
    np.savez(out, **table)
    print(f"wrote {out} ({table['nu_alpha'].shape[0]} x {table['nu_alpha'].shape[1]})")
