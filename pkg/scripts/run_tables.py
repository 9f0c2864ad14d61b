"""Reproduce the two accuracy tables on synthetic subjects.

Table I: four-class accuracy for the imagery and perception sessions.
Table II: one-vs-rest accuracy per class on the imagery session.
"""
import argparse
import time
from pathlib import Path

from vmi.classify import TableLayout, cross_validate, render_report
from vmi.core import CLASS_ORDER, AnalysisConfig, CvConfig, MarkerKind
from vmi.dsp import alpha_filter, extract_epochs, filter_epochs
from vmi.synth import generate_session, preset_config

TASKS = {"Visual motion imagery": ("imagery", MarkerKind.CUE_ONSET),
         "Visual perception": ("perception", MarkerKind.STIMULUS_ONSET)}


def session_epochs(preset, session, seed, trials, cfg, onset):
    rec = generate_session(preset_config(preset, session, seed=seed, n_trials_per_class=trials))
    es = extract_epochs(rec, cfg.epoch_window_s, onset)
    return filter_epochs(es, alpha_filter(cfg, rec.sample_rate_hz))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="high", choices=["null", "low", "high"])
    ap.add_argument("--subjects", type=int, default=3)
    ap.add_argument("--trials-per-class", type=int, default=50)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", type=Path, help="write table1.txt and table2.txt here")
    args = ap.parse_args()
    cfg = AnalysisConfig(cv=CvConfig(repeats=args.repeats))

    table1 = {task: {} for task in TASKS}
    table2 = {c: {} for c in CLASS_ORDER}
    for k in range(args.subjects):
        subject = f"sub{k + 1:02d}"
        for task, (session, onset) in TASKS.items():
            t = time.time()
            es = session_epochs(args.preset, session, 1000 * (k + 1), args.trials_per_class, cfg, onset)
            table1[task][subject] = cross_validate(es, cfg)
            if session == "imagery":
                for c in CLASS_ORDER:
                    table2[c][subject] = cross_validate(es, cfg, c)
            print(f"{subject} {session}: {table1[task][subject].cell()} ({time.time() - t:.0f} s)", flush=True)

    t1 = render_report(table1, TableLayout.TABLE_I)
    t2 = render_report(table2, TableLayout.TABLE_II)
    print("\n" + t1 + "\n" + t2)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "table1.txt").write_text(t1)
        (args.out / "table2.txt").write_text(t2)


if __name__ == "__main__":
    main()
