"""Regenerate the hard-coded 10-10 angle table in ``vmi.core``.

Electrodes on a lateral row sit at equal arc-length fractions of the circle
through the row's two equator end points and its midline point.
Prints ``(label, theta_deg, phi_deg)`` with theta the polar angle from Cz and
phi the azimuth counter-clockwise from the right pre-auricular direction.
"""
import numpy as np


def sph(theta, phi):
    t, p = np.radians(theta), np.radians(phi)
    return np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])


def angles(v):
    v = v / np.linalg.norm(v)
    theta = np.degrees(np.arccos(np.clip(v[2], -1, 1)))
    phi = np.degrees(np.arctan2(v[1], v[0])) % 360
    return theta, phi


def arc_points(a, m, b, fractions):
    """Points along the circle through a, m, b between a and m."""
    center = np.linalg.solve(np.array([a - m, b - m, np.cross(a - m, b - m)]),
                             np.array([(a @ a - m @ m) / 2, (b @ b - m @ m) / 2,
                                       np.cross(a - m, b - m) @ m]))
    u, w = a - center, m - center
    r = np.linalg.norm(u)
    n = np.cross(u, w)
    n /= np.linalg.norm(n)
    total = np.arccos(np.clip(u @ w / (r * r), -1, 1))
    out = []
    for f in fractions:
        ang = f * total
        p = center + np.cos(ang) * u + np.sin(ang) * np.cross(n, u)
        out.append(p / np.linalg.norm(p))
    return out


table = {}
for name, th in [("Fpz", 90), ("AFz", 67.5), ("Fz", 45), ("FCz", 22.5)]:
    table[name] = (th, 90.0)
table["Cz"] = (0.0, 90.0)
for name, th in [("CPz", 22.5), ("Pz", 45), ("POz", 67.5), ("Oz", 90)]:
    table[name] = (th, 270.0)
for name, th in [("C1", 22.5), ("C3", 45), ("C5", 67.5), ("T7", 90)]:
    table[name] = (th, 180.0)
for name, th in [("C2", 22.5), ("C4", 45), ("C6", 67.5), ("T8", 90)]:
    table[name] = (th, 0.0)
right_eq = ["Fp2", "AF8", "F8", "FT8"]
for i, name in enumerate(right_eq):
    table[name] = (90.0, 72.0 - 18 * i)
for i, name in enumerate(["TP8", "P8", "PO8", "O2"]):
    table[name] = (90.0, (342.0 - 18 * i) % 360)
for name in ["Fp2", "AF8", "F8", "FT8", "TP8", "P8", "PO8", "O2"]:
    th, ph = table[name]
    left = name[:-1] + str(int(name[-1]) - 1)
    table[left] = (th, (180.0 - ph) % 360)

rows = {
    "AF": ("AF7", "AFz", "AF8", {"AF5": 0.25, "AF3": 0.5}),
    "F": ("F7", "Fz", "F8", {"F5": 0.25, "F3": 0.5, "F1": 0.75}),
    "FC": ("FT7", "FCz", "FT8", {"FC5": 0.25, "FC3": 0.5, "FC1": 0.75}),
    "CP": ("TP7", "CPz", "TP8", {"CP5": 0.25, "CP3": 0.5, "CP1": 0.75}),
    "P": ("P7", "Pz", "P8", {"P5": 0.25, "P3": 0.5, "P1": 0.75}),
    "PO": ("PO7", "POz", "PO8", {"PO5": 0.25, "PO3": 0.5}),
}
for left, mid, right, members in rows.values():
    a, m, b = (sph(*table[k]) for k in (left, mid, right))
    for label, frac in members.items():
        (p,) = arc_points(a, m, b, [frac])
        th, ph = angles(p)
        table[label] = (th, ph)
        mirror = label[:-1] + str(int(label[-1]) + 1)
        table[mirror] = (th, (180.0 - ph) % 360)

order = ("Fp1 Fpz Fp2 AF7 AF5 AF3 AF4 AF6 AF8 F7 F5 F3 F1 Fz F2 F4 F6 F8 "
         "FT7 FC5 FC3 FC1 FCz FC2 FC4 FC6 FT8 T7 C5 C3 C1 Cz C2 C4 C6 T8 "
         "TP7 CP5 CP3 CP1 CPz CP2 CP4 CP6 TP8 P7 P5 P3 P1 Pz P2 P4 P6 P8 "
         "PO7 PO5 PO3 POz PO4 PO6 PO8 O1 Oz O2").split()
assert len(order) == 64 and len(set(order)) == 64
for name in order:
    th, ph = table[name]
    print(f'    ("{name}", {th:.2f}, {ph:.2f}),')
