"""Score the pipeline over the whole seeded benchmark and print the staged
metrics table that the fusion strategy is designed around.

Run:  python3 demos/benchmark_report.py   (about half a minute)
"""

from gprscan.detect import run_detectors
from gprscan.evaluation import (MetricsReport, PrCounts, evaluate_findings,
                                format_report, precision)
from gprscan.fuse import cross_verify_stages, staged_metrics
from gprscan.synth import make_benchmark


def main():
    bench = make_benchmark(1)
    print(f"benchmark: {len(bench)} volumes (10 healthy / 10 void / 10 loose / 10 manhole)")

    totals = {}
    staged = {"step1": PrCounts(), "step2": PrCounts(), "step3": PrCounts()}
    healthy_clean = 0

    for i, (volume, truth) in enumerate(bench):
        trace = cross_verify_stages(run_detectors(volume), volume.shape)
        if i < 10:
            healthy_clean += len(trace.findings) == 0
        for step in staged:
            staged[step] += staged_metrics(trace, truth)[step].per_class["distress"]
        report = evaluate_findings(trace.findings, truth)
        for cls, counts in report.per_class.items():
            totals[cls] = totals.get(cls, PrCounts()) + counts

    rollup = MetricsReport(per_class=totals)
    print()
    print(format_report(rollup, title="Benchmark (3D overlap >= 0.3)"))
    print()
    print("staged distress precision (candidate pool surviving each step):")
    for step in ("step1", "step2", "step3"):
        p = precision(staged[step])
        print(f"  {step}: {p:.1%}" if p is not None else f"  {step}: --")
    print(f"healthy volumes with zero findings: {healthy_clean}/10")


if __name__ == "__main__":
    main()
