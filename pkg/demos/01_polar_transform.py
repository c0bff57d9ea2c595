"""Walk through the polar warp: why concentric structures become bands.

Builds a synthetic disc/cup pair, crops the region of interest, warps it to
polar coordinates, and warps it back. Along the way it prints the numbers
that motivate the whole preprocessing step: the tiny cup covers a far larger
share of the polar image than of the Cartesian crop, and the round trip
loses almost nothing.

Outputs land in demos/output/01/.
"""

from pathlib import Path

import numpy as np

from polarseg.data import SyntheticConfig, synthesize_sample
from polarseg.metrics import dice
from polarseg.polar import (
    PolarGrid,
    cart_to_polar_point,
    crop_roi,
    crop_square,
    polar_to_cart_point,
    roi_crop_box,
    roi_in_crop,
    warp_to_cartesian,
    warp_to_polar,
)
from polarseg.raster_io import save_image_png

OUT = Path(__file__).parent / "output" / "01"
OUT.mkdir(parents=True, exist_ok=True)

# -- point conversions are an exact inverse pair ------------------------------
rec = synthesize_sample(SyntheticConfig(image_size=512, disc_axis_range=(70, 110)),
                        np.random.default_rng(3))
crop, roi = crop_roi(rec.image, rec.disc_mask, margin=1.5)
print(f"ROI: center ({roi.center_x:.1f}, {roi.center_y:.1f}), radius {roi.radius:.1f} px")

x, y = roi.center_x + 40.0, roi.center_y - 25.0
r, theta = cart_to_polar_point(x, y, roi)
x2, y2 = polar_to_cart_point(r, theta, roi)
print(f"point ({x:.1f}, {y:.1f}) -> (r={r:.3f}, theta={theta:.3f}) -> "
      f"({x2:.1f}, {y2:.1f}); error {max(abs(x - x2), abs(y - y2)):.2e}")

# -- image and masks to the polar frame ---------------------------------------
grid = PolarGrid(num_radii=512, num_angles=512)
local = roi_in_crop(roi)
polar_img = warp_to_polar(crop, local, grid)

nearest = PolarGrid(512, 512, interpolation="nearest")
y0, x0, side = roi_crop_box(roi)
disc_crop = crop_square(rec.disc_mask.astype(np.float64), y0, x0, side)
cup_crop = crop_square(rec.cup_mask.astype(np.float64), y0, x0, side)
polar_disc = warp_to_polar(disc_crop, local, nearest)
polar_cup = warp_to_polar(cup_crop, local, nearest)

save_image_png(OUT / "cartesian_crop.png", crop)
save_image_png(OUT / "polar_image.png", polar_img)
save_image_png(OUT / "polar_disc_band.png", polar_disc)

# the area-rebalancing effect the warp exists for
print(f"cup share of the Cartesian crop: {cup_crop.mean():.3f}")
print(f"cup share of the polar image:    {polar_cup.mean():.3f} "
      f"({polar_cup.mean() / max(cup_crop.mean(), 1e-9):.1f}x larger)")

# -- and back again ------------------------------------------------------------
back_disc = warp_to_cartesian(polar_disc, roi, *rec.disc_mask.shape,
                              interpolation="nearest") > 0.5
back_cup = warp_to_cartesian(polar_cup, roi, *rec.cup_mask.shape,
                             interpolation="nearest") > 0.5
print(f"round-trip dice: disc {dice(back_disc, rec.disc_mask):.4f}, "
      f"cup {dice(back_cup, rec.cup_mask):.4f}")
print(f"images written to {OUT}")
