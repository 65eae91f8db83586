"""In-bed fall risk assessment from bed contours and 2D body keypoints."""

__version__ = "0.1.0"
