"""Classifier adapter for the catoptric oracle wire protocol.

Exposes image classifiers behind the JSON prediction protocol (one object
per stdio line or HTTP POST /predict): the adapter owns all preprocessing,
echoes request ids, renormalizes softmax scores to sum to 1, and answers
malformed requests with an error response instead of dying.

Models: `builtin-tiny`, a dependency-free deterministic classifier used
for protocol conformance fixtures, and any torchvision classification
model (resnet50, alexnet, vgg19, ...) when torch is installed and weights
are available locally.
"""

from .models import AdapterConfig, TinyDeterministicModel, build_model
from .protocol import format_error, format_response, parse_request
from .server import handle_frame, serve_http, serve_stdio

__version__ = "0.1.0"
