"""Chain-based elicitation of conversational tone spaces.

Alternating tone/sentence tasks form a Gibbs sampler over a joint
tone-sentence distribution; rating stages turn the sampled vocabulary into
tone embeddings; the analysis and alignment modules compare the resulting
spaces within and across domains.
"""

__version__ = "0.1.0"
