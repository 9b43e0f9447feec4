"""Published per-class evaluation rows for the four hosted models.

Each row is (precision, recall, f1, accuracy) as printed, per indicator
in canonical order SL, SW, SR, MR, PL, AP. Used to reverse-engineer
confusion counts and to pin the macro-averaging convention.
"""

CHATGPT_ROWS = {
    "SL": (0.61, 0.84, 0.70, 0.85),
    "SW": (0.80, 0.82, 0.81, 0.82),
    "SR": (0.49, 0.98, 0.66, 0.67),
    "MR": (0.97, 0.87, 0.92, 0.94),
    "PL": (0.75, 0.94, 0.83, 0.91),
    "AP": (0.32, 1.00, 0.48, 0.84),
}

GEMINI_ROWS = {
    "SL": (0.76, 0.96, 0.85, 0.92),
    "SW": (0.96, 0.59, 0.73, 0.81),
    "SR": (0.55, 0.89, 0.68, 0.73),
    "MR": (0.89, 0.98, 0.93, 0.94),
    "PL": (0.91, 0.96, 0.93, 0.97),
    "AP": (0.57, 1.00, 0.73, 0.94),
}

GROK2_ROWS = {
    "SL": (0.76, 0.91, 0.83, 0.91),
    "SW": (0.83, 0.92, 0.88, 0.87),
    "SR": (0.41, 0.99, 0.58, 0.55),
    "MR": (0.98, 0.56, 0.72, 0.82),
    "PL": (0.82, 1.00, 0.90, 0.94),
    "AP": (0.69, 1.00, 0.82, 0.96),
}

CLAUDE_ROWS = {
    "SL": (0.83, 0.76, 0.79, 0.91),
    "SW": (0.76, 0.80, 0.78, 0.80),
    "SR": (0.52, 0.99, 0.68, 0.70),
    "MR": (0.98, 0.85, 0.91, 0.93),
    "PL": (0.69, 0.99, 0.82, 0.89),
    "AP": (0.54, 1.00, 0.70, 0.93),
}

ALL_MODEL_ROWS = {
    "chatgpt": CHATGPT_ROWS,
    "gemini": GEMINI_ROWS,
    "grok2": GROK2_ROWS,
    "claude": CLAUDE_ROWS,
}

# printed average row of the gemini table: P, R, F1, Acc
GEMINI_AVERAGE = (0.77, 0.90, 0.81, 0.88)
