"""dcdeblur: conditional-GAN image deblurring with a dark-channel loss.

A self-contained toolchain: a numpy reverse-mode tensor engine, the
encoder-decoder generator and conditional discriminator, the three-term
generator loss (adversarial + L1 content + L2 dark-channel), synthetic
paired-data generation, training, evaluation, and a CLI.
"""

__version__ = "0.1.0"
