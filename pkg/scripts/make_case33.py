"""Write the 33-bus radial feeder case (12.66 kV, 10 MVA base) with three batteries.

Impedances are tabulated in ohms and converted to per-unit here. The daily
load shape is the standard hourly winter-weekday profile in percent of peak.
"""
from __future__ import annotations

import argparse
from pathlib import Path

KV, BASE_MVA = 12.66, 10.0

# from, to, r (ohm), x (ohm)
BRANCHES = [
    (1, 2, .0922, .0470), (2, 3, .4930, .2511), (3, 4, .3660, .1864), (4, 5, .3811, .1941),
    (5, 6, .8190, .7070), (6, 7, .1872, .6188), (7, 8, .7114, .2351), (8, 9, 1.0300, .7400),
    (9, 10, 1.0440, .7400), (10, 11, .1966, .0650), (11, 12, .3744, .1238), (12, 13, 1.4680, 1.1550),
    (13, 14, .5416, .7129), (14, 15, .5910, .5260), (15, 16, .7463, .5450), (16, 17, 1.2890, 1.7210),
    (17, 18, .7320, .5740), (2, 19, .1640, .1565), (19, 20, 1.5042, 1.3554), (20, 21, .4095, .4784),
    (21, 22, .7089, .9373), (3, 23, .4512, .3083), (23, 24, .8980, .7091), (24, 25, .8960, .7011),
    (6, 26, .2030, .1034), (26, 27, .2842, .1447), (27, 28, 1.0590, .9337), (28, 29, .8042, .7006),
    (29, 30, .5075, .2585), (30, 31, .9744, .9630), (31, 32, .3105, .3619), (32, 33, .3410, .5302),
]

# bus: (kW, kvar) at peak
LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
    9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
    16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
    23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20),
    29: (120, 70), 30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40),
}

SHAPE = [67, 63, 60, 59, 59, 60, 74, 86, 95, 96, 96, 95, 95, 95, 93, 94, 99, 100, 100, 96, 91, 83, 73, 63]

# bus, p_ch_max, p_disch_max, e_min, e_max, e_init, eta_ch, eta_disch, r_bess, r_cvt, s_cvt_max
STORAGE = [
    (18, 0.3, 0.3, 0.1, 1.2, 0.6, 1.0, 1.0, 0.2, 0.2, 0.35),
    (25, 0.5, 0.5, 0.2, 2.0, 1.0, 1.0, 1.0, 0.15, 0.15, 0.6),
    (33, 0.4, 0.4, 0.1, 1.6, 0.8, 1.0, 1.0, 0.2, 0.1, 0.5),
]


def case_text(num_periods: int = 24) -> str:
    zbase = KV ** 2 / BASE_MVA
    shape = " ".join(f"{s / 100:g}" for s in SHAPE[:num_periods])
    out = ["# 33-bus radial distribution feeder, hourly horizon, three batteries",
           "[meta]", f"base_mva {BASE_MVA:g}", f"num_periods {num_periods}", "dt_hours 1",
           f"load_shape {shape}", "", "[buses]", "# id kind v_min v_max (magnitudes, pu)",
           "1 slack 1.0 1.0"]
    out += [f"{b} pq 0.9 1.1" for b in range(2, 34)]
    out += ["", "[branches]", "# from to r x flow_limit (pu, pu, MVA)"]
    out += [f"{f} {t} {r / zbase:.10f} {x / zbase:.10f} 10" for f, t, r, x in BRANCHES]
    out += ["", "[generators]", "# bus p_min p_max q_min q_max c2 c1 c0",
            "1 0 10 -10 10 5 20 0"]
    out += ["", "[storage]",
            "# bus p_ch_max p_disch_max e_min e_max e_init eta_ch eta_disch r_bess r_cvt s_cvt_max tech"]
    out += [" ".join(f"{v:g}" for v in row) + " BESS" for row in STORAGE]
    out += ["", "[loads]", "# bus period p_mw q_mvar; '*' rows follow load_shape"]
    out += [f"{b} * {p / 1000:g} {q / 1000:g}" for b, (p, q) in LOADS.items()]
    return "\n".join(out) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    default = Path(__file__).resolve().parents[1] / "src" / "essopt" / "data" / "case33bw.case"
    ap.add_argument("--output", type=Path, default=default)
    ap.add_argument("--periods", type=int, default=24)
    args = ap.parse_args()
    args.output.write_text(case_text(args.periods), encoding="utf-8")
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
