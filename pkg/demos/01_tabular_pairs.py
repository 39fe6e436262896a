"""
Who counts as a positive?
=========================

A small tour of the tabular side: encode a handful of records, build the
combined similarity matrix and watch the positive sets grow with the
threshold ``h``.
"""
import numpy as np

from tgv import assign_pairs, batch_similarity, encode_batch, fit_schema

# %%
# Six records with two continuous and two categorical attributes. Rows 0
# and 1 are near twins; row 2 is close to both; rows 3-5 form a second group.
records = [
    {"age": 61, "bmi": 27.0, "smoker": "yes", "sex": "f"},
    {"age": 62, "bmi": 27.5, "smoker": "yes", "sex": "f"},
    {"age": 58, "bmi": 26.0, "smoker": "yes", "sex": "m"},
    {"age": 40, "bmi": 22.0, "smoker": "no", "sex": "m"},
    {"age": 41, "bmi": 23.0, "smoker": "no", "sex": "m"},
    {"age": 45, "bmi": 21.5, "smoker": "no", "sex": "f"},
]
schema = fit_schema(records)
batch = encode_batch(records, schema)
print("bipolar categorical block:\n", batch.a_cat)
print("z-scored continuous block:\n", np.round(batch.a_con, 3))

# %%
# lambda = 0.5 weighs the two similarity families equally.
s = batch_similarity(batch, 0.5).values
print("combined similarity:\n", np.round(s, 3))

# %%
# h = 0 keeps only the best match (plus exact ties). Larger h admits
# near-best matches; positive sets only ever grow.
for h in (0.0, 0.05, 0.2, 0.5):
    pairs = assign_pairs(s, h)
    print(f"h={h:<4}", [p.tolist() for p in pairs.positives])
