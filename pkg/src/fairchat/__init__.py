"""fairchat: adversarially debiased Seq2Seq dialogue models.

Trains a feature disentanglement autoencoder that separates legitimate
gender content from everything else, uses it to adversarially debias a
dialogue generator, and audits the result with hypothesis-test fairness
metrics and BLEU/Distinct quality metrics.
"""

__version__ = "0.1.0"
