"""
Monocular many-task vehicle analysis toolkit: parts, visibility, templates and 3D pose.
"""
