"""JSON (de)serialisation of network weights as flat arrays with shapes."""

import numpy as np

from lanecoop.errors import FormatError
from lanecoop.numeric import Layer, LstmParams, MlpParams


def array_to_dict(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def array_from_dict(d) -> np.ndarray:
    try:
        arr = np.asarray(d["data"], dtype=float)
        return arr.reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad array record: {exc}") from None


def mlp_to_dict(p: MlpParams) -> dict:
    return {"layers": [{"activation": l.activation, "W": array_to_dict(l.W), "b": array_to_dict(l.b)}
                       for l in p.layers]}


def mlp_from_dict(d) -> MlpParams:
    try:
        return MlpParams([Layer(array_from_dict(l["W"]), array_from_dict(l["b"]), l["activation"])
                          for l in d["layers"]])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad MLP record: {exc}") from None


def lstm_to_dict(p: LstmParams) -> dict:
    return {"W": array_to_dict(p.W), "U": array_to_dict(p.U), "b": array_to_dict(p.b)}


def lstm_from_dict(d) -> LstmParams:
    try:
        return LstmParams(array_from_dict(d["W"]), array_from_dict(d["U"]), array_from_dict(d["b"]))
    except KeyError as exc:
        raise FormatError(f"bad LSTM record: missing {exc}") from None
