"""ERSP and alpha topography for synthetic imagery and perception sessions."""
import argparse
from pathlib import Path

import numpy as np

from vmi.cli import ERSP_EPOCH_S, TOPO_EPOCH_S
from vmi.core import MarkerKind
from vmi.dsp import extract_epochs
from vmi.synth import generate_session, preset_config
from vmi.timefreq import TopoMode, alpha_topography, compute_ersp, ersp_to_svg, topography_to_svg

ONSET = {"imagery": MarkerKind.CUE_ONSET, "perception": MarkerKind.STIMULUS_ONSET}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="high", choices=["null", "low", "high"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials-per-class", type=int, default=25)
    ap.add_argument("--channel", default="Oz")
    ap.add_argument("--out", type=Path, default=Path("signatures"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    for session, onset in ONSET.items():
        rec = generate_session(preset_config(args.preset, session, seed=args.seed,
                                             n_trials_per_class=args.trials_per_class))
        ersp = compute_ersp(extract_epochs(rec, ERSP_EPOCH_S, onset), args.channel)
        (args.out / f"{session}_ersp_{args.channel}.svg").write_bytes(ersp_to_svg(ersp))
        alpha = (ersp.freqs_hz >= 8) & (ersp.freqs_hz <= 13)
        task = ersp.times_s >= 0.25
        print(f"{session}: mean alpha ERSP at {args.channel} after onset "
              f"{ersp.values_db[alpha][:, task].mean():+.2f} dB")

        frames = alpha_topography(extract_epochs(rec, TOPO_EPOCH_S, onset), mode=TopoMode.DB_VS_BASELINE)
        for f in frames:
            a, b = (int(v) for v in f.window_ms)
            (args.out / f"{session}_topo_{a:04d}-{b:04d}ms.svg").write_bytes(topography_to_svg(f))
        cluster = np.array([f.cluster_mean() for f in frames])
        print(f"{session}: occipital cluster dB per window {np.round(cluster, 2).tolist()}")
    print(f"figures in {args.out}/")


if __name__ == "__main__":
    main()
