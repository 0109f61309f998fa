"""Entry point: `python -m model_oracle --model resnet50 --transport stdio`."""

import argparse
import json
import sys

from .models import IMAGENET_MEAN, IMAGENET_STD, AdapterConfig, build_model
from .server import serve_http, serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-oracle",
        description="Serve an image classifier over the oracle wire protocol.",
    )
    parser.add_argument("--model", default="builtin-tiny",
                        help="builtin-tiny or a torchvision model name (resnet50, alexnet, ...)")
    parser.add_argument("--transport", default="stdio",
                        help="stdio (default) or http:<port>")
    parser.add_argument("--weights", default=None,
                        help="torchvision weights name or a local .pt/.pth checkpoint")
    parser.add_argument("--resize", type=int, default=256)
    parser.add_argument("--crop", type=int, default=224)
    parser.add_argument("--normalize", default="imagenet", choices=["imagenet", "none"])
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--print-config", action="store_true",
                        help="echo the resolved config to stderr before serving")
    args = parser.parse_args(argv)

    mean, std = (IMAGENET_MEAN, IMAGENET_STD) if args.normalize == "imagenet" \
        else ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    config = AdapterConfig(model=args.model, transport=args.transport,
                           resize=args.resize, crop=args.crop,
                           normalize_mean=mean, normalize_std=std,
                           weights=args.weights, device=args.device)
    if args.print_config:
        print(json.dumps(config.to_json()), file=sys.stderr)

    model = build_model(config)
    if config.transport == "stdio":
        serve_stdio(model)
    elif config.transport.startswith("http:"):
        serve_http(model, int(config.transport.split(":", 1)[1]))
    else:
        print(f"unknown transport {config.transport!r}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
