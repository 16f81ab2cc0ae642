"""Mix-zone location privacy simulator with decoy traffic.

Deterministic vehicular simulation of cryptographic mix-zones whose RSUs hand
out chaff credentials to relaying vehicles, a deletable membership filter that
lets honest receivers discard the chaff, and a passive adversary that links
pseudonyms across zones by timing, geometry and vehicle length.
"""

__version__ = "0.1.0"
