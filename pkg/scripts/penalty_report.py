"""Per-band Bi-Di penalty and SNR terms of the bundled scenario, HCF against SMF backscatter.

Usage: python3 scripts/penalty_report.py
"""

from dataclasses import replace

import numpy as np

from hcfbidi.link_budget import evaluate_scenario
from hcfbidi.reporting import bundled_scenario, penalty_summary


def band_rows(results):
    for band in "OESCL":
        rs = [r for r in results if r.band == band and not r.excluded]
        pen = penalty_summary(rs)
        snr = np.mean([r.snr_total for r in rs])
        rb = np.mean([r.snr.snr_rb for r in rs])
        leak = np.mean([r.snr.snr_leak for r in rs])
        yield (f"{band}  SNR {snr:6.2f} dB  RB {rb:6.2f} dB  leak {leak:6.2f} dB  "
               f"penalty mean {pen['mean_db']:.3f} max {pen['max_db']:.3f} dB")


def main():
    sc = bundled_scenario()
    fw, bw = sc.directional("FW"), sc.directional("BW")
    smf = fw.fiber.with_rb(fw.fiber.rb_reference)
    for label, pair in (("HCF", (fw, bw)), ("SMF", (replace(fw, fiber=smf), replace(bw, fiber=smf)))):
        res = evaluate_scenario(*pair)
        pen = penalty_summary(res)
        print(f"{label}: mean {pen['mean_db']:.3f} dB, max {pen['max_db']:.3f} dB over {pen['n']} channels")
        for line in band_rows(res):
            print("  " + line)


if __name__ == "__main__":
    main()
