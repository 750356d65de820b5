from __future__ import annotations

from pathlib import Path

import numpy as np

from src.models.documents import NetworkDocument
from src.numkit.nets import DenseNet


def to_document(net: DenseNet) -> NetworkDocument:
    return NetworkDocument(
        layer_sizes=list(net.layer_sizes),
        activation=net.activation,
        weights=[w.ravel().tolist() for w in net.weights],
        biases=[b.tolist() for b in net.biases],
    )


def from_document(doc: NetworkDocument) -> DenseNet:
    sizes = tuple(doc.layer_sizes)
    weights = tuple(
        np.asarray(w, dtype=np.float64).reshape(sizes[i + 1], sizes[i])
        for i, w in enumerate(doc.weights)
    )
    biases = tuple(np.asarray(b, dtype=np.float64) for b in doc.biases)
    return DenseNet(layer_sizes=sizes, weights=weights, biases=biases, activation=doc.activation)


def save_network(net: DenseNet, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_document(net).model_dump_json(indent=1), encoding="utf-8")


def load_network(path: Path) -> DenseNet:
    doc = NetworkDocument.model_validate_json(path.read_text(encoding="utf-8"))
    return from_document(doc)
