"""Measured waveform SNR against the AWGN target over a range of SNRs and formats.

Usage: python3 scripts/waveform_crosscheck.py [--symbols N]
"""

import argparse

from hcfbidi.reporting import bundled_scenario
from hcfbidi.waveform_engine import DspConfig, ImpairmentSpec, awgn_for_symbol_snr, measure_channel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--symbols", type=int, default=2 ** 16)
    args = ap.parse_args()
    sc = bundled_scenario()
    cfg = DspConfig(n_symbols=args.symbols, cpr_window=46)
    for M, c in sorted(sc.constellations.items()):
        for snr in (10.0, 15.0, 20.0, 25.0):
            m = measure_channel(cfg, ImpairmentSpec(snr_awgn=awgn_for_symbol_snr(snr, 2)), c, seed=1)
            stages = m.traces[m.best[0]].stage_snr
            print(f"{c.name:8s} target {snr:4.1f} dB  measured {m.snr:6.2f} dB  "
                  + "  ".join(f"{k} {v:6.2f}" for k, v in stages.items()))


if __name__ == "__main__":
    main()
