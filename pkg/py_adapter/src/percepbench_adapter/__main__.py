import argparse
import sys

from .metrics import available_metrics, load_metric
from .protocol import serve


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="percepbench_adapter",
        description="serve a wrapped quality metric over stdin/stdout",
    )
    p.add_argument("--metric", default="stub", help=f"one of: {', '.join(available_metrics())}")
    args = p.parse_args(argv)
    try:
        metric = load_metric(args.metric)
    except (KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return serve(metric)


if __name__ == "__main__":
    sys.exit(main())
