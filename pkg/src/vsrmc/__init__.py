"""Motion-compensation and resampling operators for video super-resolution."""
from .core import FlowField, FrameTriplet, GridGeometry, map_hr_to_lr, round_nearest
from .mcops import MODES, JubwOutput, SpmcOutput, jubw, jubw_grad, spmc_fw, stack_compensated
from .metrics import psnr_y, rgb_to_ycbcr
from .resample import (WarpGradients, backward_warp_bilinear, backward_warp_bilinear_grad,
                       bicubic_downsample, bicubic_upsample)

__version__ = "0.1.0"
