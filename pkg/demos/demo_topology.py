"""
Legal antenna connectors
========================

Sixteen antennas in four groups of four, two RF chains.  Six ways exist to
wire the chains to groups; only a power of two of them can be indexed by
whole bits, so four are kept, picked to be as far apart as possible.
"""
from gsmfeedback.topology import GsmConfig, count_legal, enumerate_candidates, hamming_distance, legal_connectors

cfg = GsmConfig()
m_bar, m = count_legal(cfg)
print(f"{m_bar} candidate connectors, {m} legal ({m.bit_length() - 1} spatial bits)")

cands = enumerate_candidates(cfg)
print("candidate groups:", [c.groups for c in cands])

legal = legal_connectors(cfg)
print("legal groups:    ", [c.groups for c in legal.legal])

# pairwise Hamming distances of the activation patterns
for a in legal.legal:
    print(a.groups, [hamming_distance(a, b) for b in legal.legal])

# the activation pattern of one connector, antenna by antenna
print("pattern of", legal[0].groups, legal[0].pattern)
