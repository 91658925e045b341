# Copyright 2026 The vibkit Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Vibrotactile Tacton synthesis, mechanoreceptive spectrograms and VibNet
rating prediction, backed by the C++ core."""

import json as _json

import numpy as _np

from . import _vibkit
from ._vibkit import (
    VibkitError,
    augmented_count,
    change_amplitude,
    change_speed,
    downsample,
    inject_noise,
    kfold_split,
    spectrograms,
    zero_pad,
)

__version__ = _vibkit.__version__

__all__ = [
    "Model",
    "VibkitError",
    "augmented_count",
    "change_amplitude",
    "change_speed",
    "downsample",
    "generate_corpus",
    "inject_noise",
    "kfold_split",
    "render_for_model",
    "rmse",
    "spectrograms",
    "synthesize",
    "validate",
    "zero_pad",
]


def _spec_text(spec):
    return spec if isinstance(spec, str) else _json.dumps(spec)


def synthesize(spec, sample_rate=1000):
    """Samples a TactonSpec (dict or JSON text) in normalized amplitude."""
    return _vibkit.synthesize(_spec_text(spec), sample_rate)


def validate(spec):
    """Validation report: {"ok", "violations", "warnings"}."""
    return _json.loads(_vibkit.validate(_spec_text(spec)))


def render_for_model(spec):
    """The 1 kHz waveform in G that the model consumes for this spec."""
    return _vibkit.render_for_model(_spec_text(spec))


def generate_corpus(n, seed):
    """Synthetic-oracle corpus as a list of dicts with id, spec, waveform and ratings."""
    out = []
    for item in _vibkit.generate_corpus(n, seed):
        out.append(
            {
                "id": item["id"],
                "spec": _json.loads(item["spec"]),
                "waveform": item["waveform"],
                "ratings": _json.loads(item["ratings"]),
            }
        )
    return out


def rmse(predictions, truths):
    """Per-dimension RMSE of (N, 3) rating arrays."""
    p = _np.asarray(predictions, dtype=float).reshape(-1, 3)
    t = _np.asarray(truths, dtype=float).reshape(-1, 3)
    return _np.array(_vibkit.rmse(p.tolist(), t.tolist()))


class Model:
    """A loaded VibNet checkpoint in eval mode."""

    def __init__(self, path):
        self._model = _vibkit.Model.load(str(path))

    @property
    def config(self):
        return _json.loads(self._model.config)

    @property
    def parameter_count(self):
        return self._model.parameter_count

    def predict(self, samples, sample_rate=1000):
        """Raw ratings {"r", "v", "a"} for a waveform in G."""
        return _json.loads(self._model.predict(_np.asarray(samples, dtype=float), sample_rate))

    def predict_spec(self, spec):
        return _json.loads(self._model.predict_spec(_spec_text(spec)))
