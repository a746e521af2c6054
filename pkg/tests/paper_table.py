"""Table 1 as printed, one entry per (block, model, r) row, columns M=N=2..5."""

PAPER_TABLE = [
    ("H=M,H0=0", "NMF", None, ["2", "9/2", "8", "25/2"]),
    ("H=M,H0=0", "RRR", 0, ["3/2", "7/2", "6", "19/2"]),
    ("H=H0=1", "NMF", None, ["3/2", "5/2", "7/2", "9/2"]),
    ("H=H0=1", "RRR", 1, ["3/2", "5/2", "7/2", "9/2"]),
    ("H=H0=2", "NMF", None, ["3", "5", "7", "9"]),
    ("H=H0=2", "RRR", 2, ["2", "4", "6", "8"]),
    ("H=H0=3", "NMF", None, ["-", "15/2", "21/2", "27/2"]),
    ("H=H0=3", "RRR", 3, ["-", "9/2", "15/2", "21/2"]),
    ("H=H0=4", "NMF", None, ["-", "-", "14", "18"]),
    ("H=H0=4", "RRR", 3, ["-", "(9/2)", "8", "23/2"]),
    ("H=H0=4", "RRR", 4, ["-", "-", "8", "12"]),
    ("H=H0=5", "NMF", None, ["-", "-", "-", "45/2"]),
    ("H=H0=5", "RRR", 3, ["-", "(9/2)", "(8)", "12"]),
    ("H=H0=5", "RRR", 4, ["-", "-", "(8)", "25/2"]),
    ("H=H0=5", "RRR", 5, ["-", "-", "-", "25/2"]),
]
