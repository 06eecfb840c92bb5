"""Resample the raw GONU series to a weekly wide-form CSV.

Inputs are one CSV per series with a date column and a value column (as
downloaded from the EIA and Yahoo Finance pages, e.g. via
``mohsm.dataio.fetch_series``).  Choices made here:

* weeks are anchored on Friday and take the last available observation of
  the week (``W-FRI``, ``last``);
* only weeks where every series has a value are kept;
* ``x`` is the week index counted from the first kept week.

Usage:

    python scripts/prepare_gonu.py --start 2017-01-01 --end 2018-12-31 \\
        --series gold=gold.csv oil=RBRTEd.csv nasdaq=IXIC.csv usd=DX-Y.NYB.csv \\
        --out gonu_weekly.csv
"""

import argparse

import pandas as pd


def load_series(path, date_col=None, value_col=None):
    df = pd.read_csv(path)
    date_col = date_col or df.columns[0]
    value_col = value_col or ("Close" if "Close" in df.columns else df.columns[-1])
    s = pd.Series(pd.to_numeric(df[value_col], errors="coerce").values, index=pd.to_datetime(df[date_col]))
    return s.dropna().sort_index()


def weekly(series, start, end):
    frame = pd.DataFrame({name: s.loc[start:end] for name, s in series.items()})
    out = frame.resample("W-FRI").last().dropna(how="any")
    out.insert(0, "x", range(len(out)))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--series", nargs="+", required=True, help="NAME=PATH pairs, in channel order")
    ap.add_argument("--start", default="2017-01-01")
    ap.add_argument("--end", default="2018-12-31")
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    series = {}
    for item in args.series:
        name, _, path = item.partition("=")
        series[name] = load_series(path)
    weekly(series, args.start, args.end).to_csv(args.out, index=False, float_format="%.6f")


if __name__ == "__main__":
    main()
