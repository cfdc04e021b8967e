"""CPU-trainable baselines: the naive frequency predictor and the wavelet
feature + shallow network pipeline.

The naive model scores every test record with each class's training-set
frequency; by construction its macro AUC is exactly 0.5 (all positive and
negative scores tie). The wavelet pipeline extracts db4 band statistics per
lead, standardizes with train-set moments, and trains the shallow net.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .records import LabelMatrix, PredictionMatrix, Record
from .shallow import (
    FeatureScaler,
    ShallowNet,
    TrainConfig,
    TrainResult,
    predict_scores,
    shallow_train,
)
from .wavelets import wavelet_features
from .windows import aggregate, random_crop, tile_windows


def naive_fit(labels_train: LabelMatrix) -> np.ndarray:
    """Per-class training-set frequency vector."""
    if labels_train.n_records == 0:
        raise ValueError("naive_fit: empty training labels")
    return labels_train.values.mean(axis=0)


def naive_predict(
    frequencies: np.ndarray,
    record_ids: Sequence[str],
    class_codes: Sequence[str],
) -> PredictionMatrix:
    """Constant predictor: every record scores the class frequencies."""
    frequencies = np.asarray(frequencies, dtype=np.float64)
    if frequencies.shape != (len(class_codes),):
        raise ValueError("one frequency per class required")
    return PredictionMatrix(
        record_ids=tuple(record_ids),
        class_codes=tuple(class_codes),
        scores=np.tile(frequencies, (len(record_ids), 1)),
    )


@dataclass
class WaveletConfig:
    """Feature extraction knobs for the wavelet baseline.

    ``window_len`` of None extracts features from the full record; otherwise
    training uses one seeded random crop per record and prediction aggregates
    tiled half-overlapping windows with the elementwise maximum.
    """

    levels: int = 5
    window_len: Optional[int] = None


def extract_features(
    signals: Sequence[np.ndarray],
    config: Optional[WaveletConfig] = None,
    crop_seed: Optional[int] = None,
) -> np.ndarray:
    """Feature matrix for a batch of leads x samples signals.

    With ``crop_seed`` set and a window configured, each signal is randomly
    cropped first (training mode); otherwise the full record is used.
    """
    config = config or WaveletConfig()
    rows = []
    for i, signal in enumerate(signals):
        if config.window_len is not None and crop_seed is not None:
            signal = random_crop(signal, config.window_len, seed=crop_seed + i)
        rows.append(wavelet_features(signal, levels=config.levels))
    return np.stack(rows)


@dataclass
class WaveletBaseline:
    net: ShallowNet
    scaler: FeatureScaler
    class_codes: tuple[str, ...]
    config: WaveletConfig
    train_result: Optional[TrainResult] = None


def train_wavelet_baseline(
    features_train: np.ndarray,
    labels_train: LabelMatrix,
    features_val: np.ndarray,
    labels_val: LabelMatrix,
    train_config: Optional[TrainConfig] = None,
    wavelet_config: Optional[WaveletConfig] = None,
) -> WaveletBaseline:
    """Standardize on the train split and fit the shallow net."""
    if labels_train.class_codes != labels_val.class_codes:
        raise ValueError("train/val label matrices must share class order")
    scaler = FeatureScaler.fit(features_train)
    result = shallow_train(
        scaler.transform(features_train),
        labels_train.values,
        scaler.transform(features_val),
        labels_val.values,
        config=train_config,
    )
    result.dropped_columns = scaler.dropped_columns
    return WaveletBaseline(
        net=result.net,
        scaler=scaler,
        class_codes=labels_train.class_codes,
        config=wavelet_config or WaveletConfig(),
        train_result=result,
    )


def predict_wavelet_baseline(
    model: WaveletBaseline,
    signals: Sequence[np.ndarray],
    record_ids: Sequence[str],
) -> PredictionMatrix:
    """Record-level scores; windowed models aggregate tiled windows by max."""
    if len(signals) != len(record_ids):
        raise ValueError("one signal per record id required")
    rows = []
    for signal in signals:
        if model.config.window_len is None:
            feats = wavelet_features(signal, levels=model.config.levels)
            rows.append(predict_scores(model.net, model.scaler.transform(feats))[0])
        else:
            segments = tile_windows(signal, model.config.window_len)
            feats = np.stack(
                [wavelet_features(seg, levels=model.config.levels) for seg in segments]
            )
            window_scores = predict_scores(model.net, model.scaler.transform(feats))
            rows.append(aggregate(window_scores, mode="max"))
    return PredictionMatrix(
        record_ids=tuple(record_ids),
        class_codes=model.class_codes,
        scores=np.stack(rows),
    )
