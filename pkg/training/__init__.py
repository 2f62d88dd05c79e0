"""
Training-side geometry: target codecs, multi-task losses, proposal geometry
and gradient verification.
"""
from .codec import (
    BoxDeltas, ProposalLabel, Visibility, decode_box_deltas, decode_parts, decode_template_similarity,
    encode_box_deltas, encode_parts, encode_template_similarity, encode_visibility,
)
from .losses import (
    LossWeights, ProposalTerms, detection_loss, part_loss, smooth_l1, softmax_log_loss, template_loss,
    total_loss, visibility_loss,
)
from .proposals import AnchorConfig, assign_labels, generate_anchors, refine_boxes, refine_cascade
from .grad_check import grad_check, run_gradient_suite

__all__ = [
    'BoxDeltas', 'ProposalLabel', 'Visibility',
    'encode_box_deltas', 'decode_box_deltas', 'encode_parts', 'decode_parts',
    'encode_template_similarity', 'decode_template_similarity', 'encode_visibility',
    'LossWeights', 'ProposalTerms', 'smooth_l1', 'softmax_log_loss', 'detection_loss', 'part_loss',
    'visibility_loss', 'template_loss', 'total_loss',
    'AnchorConfig', 'generate_anchors', 'assign_labels', 'refine_boxes', 'refine_cascade',
    'grad_check', 'run_gradient_suite',
]
