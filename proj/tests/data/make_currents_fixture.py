"""Writes currents_sample.csv: a 32x32 coastal-current-like grid sampled
every 6 hours for one day, with a handful of cells missing (land mask and
dropouts) so ingestion has to fill them."""

import math

W = H = 32
FRAMES = 5
DT = 21600

missing = {(0, 31), (1, 31), (0, 30), (17, 9), (5, 22)}

with open("currents_sample.csv", "w") as out:
    out.write("t_sec,ix,iy,u_east,v_north\n")
    for k in range(FRAMES):
        t = k * DT
        phase = 2 * math.pi * t / 86400.0
        for iy in range(H):
            for ix in range(W):
                if (ix, iy) in missing and k % 2 == 0:
                    continue
                x = (ix + 0.5) / W
                y = (iy + 0.5) / H
                # alongshore jet plus a slowly rotating eddy
                u = 0.25 * math.exp(-((x - 0.35) / 0.2) ** 2) + 0.08 * math.sin(2 * math.pi * y + phase)
                v = -0.18 * math.cos(math.pi * x) * math.sin(math.pi * y) + 0.05 * math.cos(phase)
                out.write(f"{t},{ix},{iy},{u:.6f},{v:.6f}\n")
