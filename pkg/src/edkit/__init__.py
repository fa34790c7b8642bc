"""Few-shot event detection laboratory.

Seeded K-shot under-sampling, two-step cloze prompting with a
prototypical classification head, joint training on a toy or
pretrained masked-LM backend, and a trigger-debiasing evaluation
harness (IUS/TUS/COS samplers, bias profiling, length buckets,
ablations).
"""

__version__ = "0.1.0"
