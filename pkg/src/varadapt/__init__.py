"""Zero-shot generator adaptation with learned semantic variations.

Stage 1 learns perturbations of a target text embedding; stage 2 adapts a
copy of a source generator so that its image-direction set matches the
text-direction set in mean and second moment, regularized by EWC and an
inter-sample relation consistency term.
"""

__version__ = "0.1.0"
