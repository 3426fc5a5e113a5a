#!/usr/bin/env python3
"""Independent reconstruction of padnet report CSVs from raw run output.

Reads the same run directories as `padnet report` and rebuilds every report
file (ttb/pctb/err/scatter/scatter_r2/pad_err per size class) from
downloads.csv and progress.csv alone. Written against the documented file
formats, not the simulator sources, so byte-for-byte agreement with the Rust
reporter is evidence both implement the documented definitions:

- progress marks at ceil(size*k/100) bytes, k = 1..=100, deduplicated
- medians over records pooled across runs (successes only for time/overhead,
  all attempted for failure rates), never median-of-medians
- downloads started before a run's warmup are excluded everywhere
- round half up: floor(x*10^places + 0.5), one decimal (three for R^2),
  absent values are empty cells

Usage: rebuild_reports.py --out DIR [--pad-bin-width N] RUN_DIR...
"""

import argparse
import json
import math
import os
import sys

CELL_SIZE = 512


def fmt_fixed(x, places):
    scale = 10 ** places
    d = math.floor(x * scale + 0.5)
    sign = "-" if d < 0 else ""
    a = abs(d)
    return "%s%d.%0*d" % (sign, a // scale, places, a % scale)


def size_label(size_bytes):
    return {51200: "50K", 1048576: "1M", 5242880: "5M"}.get(
        size_bytes, "%dB" % size_bytes
    )


def marks(size_bytes):
    out = []
    for k in range(1, 101):
        mark = -((-size_bytes * k) // 100)  # ceil division
        if not out or out[-1] != mark:
            out.append(mark)
    return out


class Record(object):
    __slots__ = (
        "id", "size_bytes", "start_us", "end_us", "status",
        "padding_rx", "padding_tx", "progress",
    )


def load_run(run_dir):
    with open(os.path.join(run_dir, "run_meta.json")) as f:
        meta = json.load(f)
    records = {}
    order = []
    with open(os.path.join(run_dir, "downloads.csv")) as f:
        header = f.readline().rstrip("\n").split(",")
        assert header[0] == "download_id", "unexpected downloads.csv header"
        for line in f:
            c = line.rstrip("\n").split(",")
            r = Record()
            r.id = int(c[0])
            r.size_bytes = int(c[3])
            r.start_us = int(c[5])
            r.end_us = int(c[6]) if c[6] else None
            r.status = c[7]
            r.padding_rx = int(c[9])
            r.padding_tx = int(c[10])
            r.progress = []
            records[r.id] = r
            order.append(r)
    with open(os.path.join(run_dir, "progress.csv")) as f:
        f.readline()
        for line in f:
            c = line.rstrip("\n").split(",")
            records[int(c[0])].progress.append(
                (int(c[1]), int(c[2]), int(c[3]), int(c[4]))
            )
    warmup = meta["warmup_us"]
    kept = [r for r in order if r.start_us >= warmup]
    return meta, kept


def sample_at_mark(record, mark):
    # First progress row with content bytes >= mark; rows are increasing.
    lo, hi = 0, len(record.progress)
    while lo < hi:
        mid = (lo + hi) // 2
        if record.progress[mid][1] < mark:
            lo = mid + 1
        else:
            hi = mid
    if lo < len(record.progress):
        return record.progress[lo]
    return None


def median_sorted(values):
    values = sorted(values)
    n = len(values)
    if n == 0:
        return None
    if n % 2 == 1:
        return float(values[n // 2])
    return (values[n // 2 - 1] + values[n // 2]) / 2.0


def ols_r2(xs, ys):
    n = len(xs)
    if n < 2:
        return None
    mean_x = sum(xs) / float(n)
    mean_y = sum(ys) / float(n)
    sxx = syy = sxy = 0.0
    for i in range(n):
        dx = xs[i] - mean_x
        dy = ys[i] - mean_y
        sxx += dx * dx
        syy += dy * dy
        sxy += dx * dy
    if sxx == 0.0:
        return 0.0
    if syy == 0.0:
        return 1.0
    return (sxy * sxy) / (sxx * syy)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", required=True)
    parser.add_argument("--pad-bin-width", type=int, default=50)
    parser.add_argument("run_dirs", nargs="+")
    args = parser.parse_args()

    groups = []  # (defense_name, [records])
    scenario_hash = None
    for run_dir in args.run_dirs:
        meta, records = load_run(run_dir)
        if scenario_hash is None:
            scenario_hash = meta["scenario_hash"]
        elif scenario_hash != meta["scenario_hash"]:
            sys.exit("refusing to mix scenario hashes")
        name = meta["defense_name"]
        for group in groups:
            if group[0] == name:
                group[1].extend(records)
                break
        else:
            groups.append((name, list(records)))

    sizes = sorted({r.size_bytes for _, records in groups for r in records})
    os.makedirs(args.out, exist_ok=True)

    for size in sizes:
        label = size_label(size)
        per_group = [
            (name, [r for r in records if r.size_bytes == size])
            for name, records in groups
        ]
        grid = marks(size)

        with open(os.path.join(args.out, "ttb_%s.csv" % label), "w") as f:
            f.write("kib_count" + "".join(",%s_time_ms" % n for n, _ in per_group) + "\n")
            for mark in grid:
                cells = [fmt_fixed(mark / 1024.0, 2)]
                for _, records in per_group:
                    times = []
                    for r in records:
                        if r.status != "success":
                            continue
                        hit = sample_at_mark(r, mark)
                        if hit is not None:
                            times.append(hit[0] - r.start_us)
                    med = median_sorted(times)
                    cells.append("" if med is None else fmt_fixed(med / 1000.0, 1))
                f.write(",".join(cells) + "\n")

        with open(os.path.join(args.out, "pctb_%s.csv" % label), "w") as f:
            f.write("kib_count" + "".join(",%s_bwoh_pct" % n for n, _ in per_group) + "\n")
            for mark in grid:
                cells = [fmt_fixed(mark / 1024.0, 2)]
                for _, records in per_group:
                    pcts = []
                    for r in records:
                        if r.status != "success":
                            continue
                        hit = sample_at_mark(r, mark)
                        if hit is not None:
                            pcts.append(100.0 * (hit[2] * CELL_SIZE) / float(mark))
                    med = median_sorted(pcts)
                    cells.append("" if med is None else fmt_fixed(med, 1))
                f.write(",".join(cells) + "\n")

        with open(os.path.join(args.out, "err_%s.csv" % label), "w") as f:
            f.write("kib_count" + "".join(",%s_failure_pct" % n for n, _ in per_group) + "\n")
            for mark in grid:
                cells = [fmt_fixed(mark / 1024.0, 2)]
                for _, records in per_group:
                    if not records:
                        cells.append("")
                        continue
                    reached = sum(1 for r in records if sample_at_mark(r, mark) is not None)
                    pct = 100.0 * (len(records) - reached) / float(len(records))
                    cells.append(fmt_fixed(pct, 1))
                f.write(",".join(cells) + "\n")

        with open(os.path.join(args.out, "scatter_%s.csv" % label), "w") as f:
            f.write("defense,padding_count,download_time_ms\n")
            for name, records in per_group:
                for r in records:
                    if r.status != "success":
                        continue
                    total = r.padding_rx + r.padding_tx
                    ms = (r.end_us - r.start_us) / 1000.0
                    f.write("%s,%d,%s\n" % (name, total, fmt_fixed(ms, 1)))

        with open(os.path.join(args.out, "scatter_r2_%s.csv" % label), "w") as f:
            f.write("defense,n,r_squared\n")
            for name, records in per_group:
                ok = [r for r in records if r.status == "success"]
                xs = [float(r.padding_rx + r.padding_tx) for r in ok]
                ys = [(r.end_us - r.start_us) / 1000.0 for r in ok]
                r2 = ols_r2(xs, ys)
                f.write(
                    "%s,%d,%s\n" % (name, len(xs), "" if r2 is None else fmt_fixed(r2, 3))
                )

        with open(os.path.join(args.out, "pad_err_%s.csv" % label), "w") as f:
            f.write("padding_bin" + "".join(",%s_failure_pct" % n for n, _ in per_group) + "\n")
            width = args.pad_bin_width
            bins = sorted(
                {
                    (r.padding_rx + r.padding_tx) // width * width
                    for _, records in per_group
                    for r in records
                }
            )
            for b in bins:
                cells = [str(b)]
                for _, records in per_group:
                    members = [
                        r for r in records if (r.padding_rx + r.padding_tx) // width * width == b
                    ]
                    if not members:
                        cells.append("")
                        continue
                    failed = sum(1 for r in members if r.status != "success")
                    cells.append(fmt_fixed(100.0 * failed / float(len(members)), 1))
                f.write(",".join(cells) + "\n")

    print("rebuilt reports for %d size classes in %s" % (len(sizes), args.out))


if __name__ == "__main__":
    main()
