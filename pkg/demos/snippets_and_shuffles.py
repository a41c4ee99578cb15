"""
From a video to shuffled expression snippets
============================================

Walk one synthetic video through length unification, window sampling,
sub-video decomposition and snippet sampling, then shuffle the snippets
with an entry of the permutation table and undo it again.
"""

import numpy as np

from est.pipeline import (decompose, generate_permutation_table, make_snippet_set,
                          sample_snippet, sample_window, shuffle_snippets, unify_length,
                          unshuffle_snippets, video_rng)
from est.synth import SynthConfig, synth_dataset

ds = synth_dataset(SynthConfig(num_classes=7, per_class=1, frames=160), seed=0)
video = ds.videos[3]
print("original frames:", video.num_frames, "label:", video.label)

# long videos are subsampled to 105 frames, short ones interpolated
unified = unify_length(video)
print("unified frames:", unified.num_frames)

rng = video_rng(seed=0, video_id=video.id, epoch=0)
window = sample_window(unified, rng)
subs = decompose(window)
print("sub-videos:", len(subs), "of", subs[0].num_frames, "frames")

# 5 of the 15 frames in each sub-video, kept in temporal order
snippet = sample_snippet(subs[0], rng)
print("frames drawn from the first sub-video:", snippet.source_indices)

# the whole chain in one call, then a shuffle
snippet_set = make_snippet_set(video, video_rng(0, video.id, 0))
table = generate_permutation_table(n=7, count=10, seed=0)
for k, perm in enumerate(table.permutations[:3]):
    print(f"order {k}:", perm)

shuffled = shuffle_snippets(snippet_set, 4, table)
print("order label:", shuffled.order_label)
restored = unshuffle_snippets(shuffled, table)
print("restored exactly:", np.array_equal(restored.frames, snippet_set.frames))
