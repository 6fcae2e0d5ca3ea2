"""Published full-scale v1 results, kept as documentation only.

These come from training on the full ClimSim low-resolution dataset with
GPUs; nothing at desk scale is expected to reproduce them. MAE is in W/m^2
after energy conversion. ``None`` marks an R^2 that was not reported (large
negative values for dq/dt and PRECSC).
"""

# variable: (MAE, R^2)
PARAFORMER_V1 = {
    "dT/dt": (2.332, 0.681),
    "dq/dt": (4.049, None),
    "NETSW": (9.739, 0.990),
    "FLWDS": (4.471, 0.940),
    "PRECSC": (2.285, None),
    "PRECC": (22.199, -1.764),
    "SOLS": (6.529, 0.972),
    "SOLL": (8.950, 0.958),
    "SOLSD": (3.701, 0.969),
    "SOLLD": (4.318, 0.888),
}

MLP_V1 = {
    "dT/dt": (2.673, 0.594),
    "dq/dt": (4.519, None),
    "NETSW": (13.753, 0.982),
    "FLWDS": (5.410, 0.917),
    "PRECSC": (2.687, None),
    "PRECC": (33.838, -34.545),
    "SOLS": (8.163, 0.959),
    "SOLL": (10.562, 0.945),
    "SOLSD": (4.603, 0.955),
    "SOLLD": (4.841, 0.863),
}

# best v1 configuration from the full grid search
BEST_V1 = {"n_layers": 6, "d_model": 256, "n_heads": 4, "batch": 512,
           "optimizer": "adamw", "scheduler": "plateau"}
