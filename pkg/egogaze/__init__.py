"""egogaze: egocentric gaze heatmap prediction on campus traversals."""

__version__ = "1.3.0"
