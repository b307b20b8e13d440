"""Crop-based word recognizers and their fusion integration points."""

from scenefuse.recognizers.vocab import (
    BLANKOUT_ID,
    EOS_ID,
    LETTERS,
    N_LOGITS,
    PAD_ID,
    VOCAB_SIZE,
    Transcript,
    argmax_lowest,
    argmax_lowest_batch,
    decode_batch,
    decode_greedy,
    encode_word,
    make_targets,
)
from scenefuse.recognizers.integration import (
    CONTEXTUAL,
    DECODER,
    INTEGRATION_POINTS,
    VISION,
    parse_point,
)
from scenefuse.recognizers.recurrent import RecurrentConfig, RecurrentRecognizer
from scenefuse.recognizers.parallel import ParallelConfig, ParallelRecognizer
from scenefuse.recognizers.fused import FusedRecognizer, build_recognizer

__all__ = [
    "LETTERS",
    "EOS_ID",
    "PAD_ID",
    "BLANKOUT_ID",
    "N_LOGITS",
    "VOCAB_SIZE",
    "Transcript",
    "argmax_lowest",
    "argmax_lowest_batch",
    "decode_batch",
    "decode_greedy",
    "encode_word",
    "make_targets",
    "VISION",
    "CONTEXTUAL",
    "DECODER",
    "INTEGRATION_POINTS",
    "parse_point",
    "RecurrentConfig",
    "RecurrentRecognizer",
    "ParallelConfig",
    "ParallelRecognizer",
    "FusedRecognizer",
    "build_recognizer",
]
