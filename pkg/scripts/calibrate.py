"""Fit per-band transceiver SNR and the global FEC gap of the bundled scenario.

Usage: python3 scripts/calibrate.py [--write] [--jobs N]

Prints the fitted values; ``--write`` stores them in src/hcfbidi/data/paper.json.
"""

import argparse
import json
import re
import time
from pathlib import Path

from hcfbidi.reporting import calibrate, load_reference, bundled_scenario, run, scenario_gmi_table

SCENARIO = Path(__file__).resolve().parents[1] / "src" / "hcfbidi" / "data" / "paper.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--write", action="store_true")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    sc = bundled_scenario()
    ref = load_reference()
    t0 = time.time()
    table = scenario_gmi_table(sc, args.jobs)
    print(f"GMI table: {time.time() - t0:.0f} s")
    cal = calibrate(sc, ref, table)
    trx = {b: round(v, 3) for b, v in cal.trx_snr.items()}
    gap = round(cal.ngmi_gap, 4)
    print("trx_snr:", trx)
    print("ngmi_gap:", gap)

    res = run(sc.with_overrides(trx_snr=trx, ngmi_gap=gap), gmi_table=table)
    for b, t in res.table.bands.items():
        print(f"{b}: GMI {t.gmi / 1e12:.1f} Tb/s, decoded {t.decoded / 1e12:.1f} Tb/s")
    for d, t in res.table.directions.items():
        print(f"{d}: GMI {t.gmi / 1e12:.1f} Tb/s, decoded {t.decoded / 1e12:.1f} Tb/s")
    print(f"Bi-Di penalty: mean {res.penalty['mean_db']:.3f} dB, max {res.penalty['max_db']:.3f} dB")

    if args.write:
        text = SCENARIO.read_text()
        text = re.sub(r'"trx_snr": \{[^}]*\}', '"trx_snr": ' + json.dumps(trx), text)
        text = re.sub(r'"ngmi_gap": [0-9.eE+-]+', f'"ngmi_gap": {gap}', text)
        text = re.sub(r'"trx_calibration_source": "[^"]*"', '"trx_calibration_source": "scripts/calibrate.py"',
                      text)
        SCENARIO.write_text(text)
        print(f"wrote {SCENARIO}")


if __name__ == "__main__":
    main()
