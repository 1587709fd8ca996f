"""Write the built-in instances to data/ as network JSON, forecast CSV, history CSV and a run config.

    python scripts/make_data.py [--out data] [--samples 365] [--seed 1]
"""
import argparse
from pathlib import Path

from cligdt.instances import ieee33, six_bus, synthetic_history
from cligdt.network import save_forecast, save_history, save_network

CASES = {
    "ieee33": (lambda: ieee33(24), "gamma = 0.8\nn = 8\neps = 0.005\nbudget_multiplier = 1.25\nsub_time_limit = 60\ntime_limit = 30\n"),
    "six_bus": (lambda: six_bus(6), "gamma = 0.8\nn = 8\neps = 0.005\nbudget_multiplier = 1.25\nshadow = ccg\n"),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--samples", type=int, default=365)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    root = Path(args.out)
    for name, (make, extra) in CASES.items():
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        net, fc = make()
        save_network(net, d / "network.json")
        save_forecast(fc, d / "forecast.csv")
        save_history(synthetic_history(net, fc, args.samples, args.seed), d / "history.csv")
        cfg = (f"# {name}: generated by scripts/make_data.py (seed {args.seed}, {args.samples} samples)\n"
               f"network = {d / 'network.json'}\nforecast = {d / 'forecast.csv'}\n"
               f"history = {d / 'history.csv'}\noutput_dir = out/{name}\nseed = {args.seed}\n" + extra)
        (d / "run.cfg").write_text(cfg)
        print(f"wrote {d}")


if __name__ == "__main__":
    main()
