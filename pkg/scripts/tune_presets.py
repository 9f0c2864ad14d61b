"""Sweep alpha-source amplitude: model-aware reference accuracy vs. the CSP+RLDA pipeline."""
import argparse
import time

import numpy as np

from vmi.classify import cross_validate
from vmi.core import CLASS_ORDER, AnalysisConfig, CvConfig
from vmi.csp import class_covariance, fit_csp
from vmi.dsp import alpha_filter, extract_epochs, filter_epochs
from vmi.synth import bayes_reference_accuracy, class_patterns, generate_session, preset_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--amps", type=float, nargs="+", default=[4, 6, 8, 10])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--n-mc", type=int, default=400)
    args = ap.parse_args()
    cfg_a = AnalysisConfig(cv=CvConfig(repeats=args.repeats))
    for amp in args.amps:
        t = time.time()
        cfg = preset_config("high", seed=args.seed, source_amplitude_uv=(amp,) * 4)
        rec = generate_session(cfg)
        es = filter_epochs(extract_epochs(rec, cfg_a.epoch_window_s), alpha_filter(cfg_a, rec.sample_rate_hz))
        del rec
        four = cross_validate(es, cfg_a).mean_acc
        ovr = [cross_validate(es, cfg_a, c).mean_acc for c in CLASS_ORDER]
        pats = class_patterns()
        cos = []
        for c in CLASS_ORDER:
            rest = [o for o in CLASS_ORDER if o is not c]
            m = fit_csp(class_covariance(es, c), class_covariance(es, rest), 3, c)
            a = m.patterns[:, 0]
            cos.append(abs(a @ pats[c]) / np.linalg.norm(a))
        bayes = bayes_reference_accuracy(cfg, args.n_mc)
        print(f"amp={amp:5.1f} bayes={bayes:.3f} 4class={four:.3f} ovr={np.round(ovr, 3)} "
              f"cos={np.round(cos, 3)} ({time.time() - t:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
