"""NDS of three published rows, in float and in exact decimal arithmetic."""

from decimal import Decimal

from radbev.metrics import MTP_KEYS, nds

ROWS = {
    "RCBEV": ("0.377", "0.534", "0.271", "0.558", "0.493", "0.209"),
    "BEVDet": ("0.308", "0.665", "0.273", "0.533", "0.829", "0.205"),
    "CenterFusion": ("0.332", "0.649", "0.263", "0.535", "0.540", "0.142"),
}

for name, (m, *errs) in ROWS.items():
    as_float = nds(float(m), {k: float(v) for k, v in zip(MTP_KEYS, errs)})
    exact = nds(Decimal(m), {k: Decimal(v) for k, v in zip(MTP_KEYS, errs)})
    print(f"{name:<13} float {as_float!r:<22} exact {exact}")
