"""Builds small full-integer quantized tflite models once per session.

Keras model construction and post-training quantization are slow, so every
fixture is session scoped and the resulting .tflite files are shared across
tests read-only.
"""

import os

import numpy as np
import pytest

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")


def _to_int8_tflite(model, in_shape, rng):
    import tensorflow as tf

    def rep():
        for _ in range(32):
            yield [rng.uniform(-3.0, 3.0, size=(1, *in_shape)).astype(np.float32)]

    conv = tf.lite.TFLiteConverter.from_keras_model(model)
    conv.optimizations = [tf.lite.Optimize.DEFAULT]
    conv.representative_dataset = rep
    conv.target_spec.supported_ops = [tf.lite.OpsSet.TFLITE_BUILTINS_INT8]
    conv.inference_input_type = tf.int8
    conv.inference_output_type = tf.int8
    return conv.convert()


def _build(layers, in_shape, seed):
    import tensorflow as tf

    tf.random.set_seed(seed)
    model = tf.keras.Sequential([tf.keras.layers.Input(shape=in_shape), *layers])
    return _to_int8_tflite(model, in_shape, np.random.default_rng(seed))


def _bias_init(seed):
    import tensorflow as tf

    return tf.keras.initializers.RandomUniform(-0.4, 0.4, seed=seed)


@pytest.fixture(scope="session")
def conv_tflite(tmp_path_factory):
    """Conv + maxpool + flatten + dense, all biases nonzero."""
    import tensorflow as tf

    blob = _build([
        tf.keras.layers.Conv2D(4, 3, activation="relu", bias_initializer=_bias_init(3)),
        tf.keras.layers.MaxPooling2D(2),
        tf.keras.layers.Flatten(),
        tf.keras.layers.Dense(10, bias_initializer=_bias_init(4)),
    ], (8, 8, 1), seed=7)
    path = tmp_path_factory.mktemp("models") / "conv.tflite"
    path.write_bytes(blob)
    return path


@pytest.fixture(scope="session")
def gmp_tflite(tmp_path_factory):
    """Conv + depthwise conv + global max pooling + dense."""
    import tensorflow as tf

    blob = _build([
        tf.keras.layers.Conv2D(6, 3, activation="relu", bias_initializer=_bias_init(5)),
        tf.keras.layers.DepthwiseConv2D(3, activation="relu", bias_initializer=_bias_init(6)),
        tf.keras.layers.GlobalMaxPooling2D(),
        tf.keras.layers.Dense(5, bias_initializer=_bias_init(8)),
    ], (10, 10, 2), seed=9)
    path = tmp_path_factory.mktemp("models") / "gmp.tflite"
    path.write_bytes(blob)
    return path


@pytest.fixture(scope="session")
def softmax_tflite(tmp_path_factory):
    import tensorflow as tf

    blob = _build([
        tf.keras.layers.Conv2D(3, 3, activation="relu"),
        tf.keras.layers.Flatten(),
        tf.keras.layers.Dense(4, activation="softmax"),
    ], (6, 6, 1), seed=11)
    path = tmp_path_factory.mktemp("models") / "softmax.tflite"
    path.write_bytes(blob)
    return path


@pytest.fixture(scope="session")
def same_pad_pool_tflite(tmp_path_factory):
    """Max pooling with SAME padding on an odd spatial extent."""
    import tensorflow as tf

    blob = _build([
        tf.keras.layers.Conv2D(3, 2, activation="relu"),
        tf.keras.layers.MaxPooling2D(2, padding="same"),
        tf.keras.layers.Flatten(),
        tf.keras.layers.Dense(4),
    ], (8, 8, 1), seed=13)
    path = tmp_path_factory.mktemp("models") / "same_pad.tflite"
    path.write_bytes(blob)
    return path


@pytest.fixture(scope="session")
def float_tflite(tmp_path_factory):
    """Same topology, but left unquantized."""
    import tensorflow as tf

    tf.random.set_seed(17)
    model = tf.keras.Sequential([
        tf.keras.layers.Input(shape=(8, 8, 1)),
        tf.keras.layers.Conv2D(4, 3, activation="relu"),
        tf.keras.layers.Flatten(),
        tf.keras.layers.Dense(10),
    ])
    blob = tf.lite.TFLiteConverter.from_keras_model(model).convert()
    path = tmp_path_factory.mktemp("models") / "float.tflite"
    path.write_bytes(blob)
    return path
