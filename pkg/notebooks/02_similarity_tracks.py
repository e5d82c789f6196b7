# %% [markdown]
# # Similarity tracks on a synthetic corpus
#
# Generates the default corpus, clusters one video into temporally
# contiguous chunks and compares those chunks to the true segments.

# %%
import numpy as np

from ectc import similarity, synth

spec = synth.SyntheticSpec(n_videos=50)
corpus = synth.generate_corpus(spec)
print(synth.corpus_stats(corpus))

# %% [markdown]
# ## One video

# %%
rec = corpus[0]
labels = np.array(rec.frame_labels)
print("ordering:", rec.ordering, "frames:", rec.T)
for M in (10, 20):
    seg = similarity.temporal_cluster(rec.features, M)
    mixed = [k for k in np.unique(seg) if len(set(labels[seg == k])) > 1]
    print(f"M={M}: {seg.max() + 1} clusters, {len(mixed)} span an action change")

# %% [markdown]
# ## Cosine similarity across true boundaries vs inside segments

# %%
cos = similarity.cosine_track(rec.features)
change = labels[1:] != labels[:-1]
print("mean inside segments:", cos[~change].mean().round(3))
print("at true boundaries  :", cos[change].round(3))

# %% [markdown]
# ## How often clusters cross a true boundary, over the corpus

# %%
for M in (5, 10, 20, 30):
    bad = 0
    for rec in corpus:
        seg = similarity.temporal_cluster(rec.features, M)
        labels = np.array(rec.frame_labels)
        bad += sum(len(set(labels[seg == k])) > 1 for k in np.unique(seg))
    print(f"M={M:>2}: {bad} boundary-crossing clusters in {len(corpus)} videos")
