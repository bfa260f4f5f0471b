"""Sequence modelling: LSTM layers, encoders, attention, and the decoder."""

from .lstm import (LSTMLayerParams, init_lstm_layer, lstm_step, lstm_sequence,
                   reverse_sequence, CELL_CLIP)
from .encoder import (EncoderParams, EncoderOutput, init_encoder, encode,
                      lstm_param_count, uni2_param_count, solve_bi_width)
from .attention import (AttentionParams, init_attention, content_attention,
                        monotonic_p, monotonic_expected_alignment,
                        monotonic_attention_soft, monotonic_attention_hard,
                        initial_alignment, precompute_memory)
from .decoder import (DecoderParams, init_decoder, decode_train, DecodeState,
                      InferenceContext, prepare_inference, init_decode_state,
                      decoder_step_infer)

__all__ = [
    "LSTMLayerParams", "init_lstm_layer", "lstm_step", "lstm_sequence",
    "reverse_sequence", "CELL_CLIP",
    "EncoderParams", "EncoderOutput", "init_encoder", "encode",
    "lstm_param_count", "uni2_param_count", "solve_bi_width",
    "AttentionParams", "init_attention", "content_attention", "monotonic_p",
    "monotonic_expected_alignment", "monotonic_attention_soft",
    "monotonic_attention_hard", "initial_alignment", "precompute_memory",
    "DecoderParams", "init_decoder", "decode_train", "DecodeState",
    "InferenceContext", "prepare_inference", "init_decode_state",
    "decoder_step_infer",
]
