"""
The 36-slot part ordering contract shared by every bank model.

Positions are fractions of the template half-extents in the canonical frame
(x along the heading, y down, z to the vehicle's left). Each part sits on one
face of the template box, inset from the face edges. Only the ordering matters
to the toolkit; the anatomy below is the convention of the bundled bank.
"""
from typing import List, Tuple

N_PARTS = 36

# (name, (x, y, z) fraction of half extents)
PART_LAYOUT: List[Tuple[str, Tuple[float, float, float]]] = [
    ("headlight_left", (1.0, -0.2, 0.6)),
    ("headlight_right", (1.0, -0.2, -0.6)),
    ("front_bumper_left", (1.0, 0.6, 0.75)),
    ("front_bumper_right", (1.0, 0.6, -0.75)),
    ("front_plate", (1.0, 0.35, 0.0)),
    ("hood_front", (1.0, -0.55, 0.0)),
    ("taillight_left", (-1.0, -0.2, 0.6)),
    ("taillight_right", (-1.0, -0.2, -0.6)),
    ("rear_bumper_left", (-1.0, 0.6, 0.75)),
    ("rear_bumper_right", (-1.0, 0.6, -0.75)),
    ("rear_plate", (-1.0, 0.35, 0.0)),
    ("trunk_rear", (-1.0, -0.55, 0.0)),
    ("wheel_front_left", (0.6, 0.55, 1.0)),
    ("wheel_rear_left", (-0.6, 0.55, 1.0)),
    ("mirror_left", (0.35, -0.35, 1.0)),
    ("door_handle_front_left", (0.1, 0.0, 1.0)),
    ("door_handle_rear_left", (-0.3, 0.0, 1.0)),
    ("sill_left", (0.0, 0.75, 1.0)),
    ("wheel_front_right", (0.6, 0.55, -1.0)),
    ("wheel_rear_right", (-0.6, 0.55, -1.0)),
    ("mirror_right", (0.35, -0.35, -1.0)),
    ("door_handle_front_right", (0.1, 0.0, -1.0)),
    ("door_handle_rear_right", (-0.3, 0.0, -1.0)),
    ("sill_right", (0.0, 0.75, -1.0)),
    ("roof_front_left", (0.3, -1.0, 0.6)),
    ("roof_front_right", (0.3, -1.0, -0.6)),
    ("roof_rear_left", (-0.4, -1.0, 0.6)),
    ("roof_rear_right", (-0.4, -1.0, -0.6)),
    ("windshield_base_left", (0.7, -1.0, 0.6)),
    ("windshield_base_right", (0.7, -1.0, -0.6)),
    ("rear_window_base_left", (-0.8, -1.0, 0.6)),
    ("rear_window_base_right", (-0.8, -1.0, -0.6)),
    ("underbody_front", (0.5, 1.0, 0.0)),
    ("underbody_rear", (-0.5, 1.0, 0.0)),
    ("underbody_left", (0.0, 1.0, 0.5)),
    ("underbody_right", (0.0, 1.0, -0.5)),
]

PART_NAMES = [name for name, _ in PART_LAYOUT]

ROOF_PARTS = tuple(range(24, 32))
FRONT_WHEELS = (12, 18)
REAR_WHEELS = (13, 19)
