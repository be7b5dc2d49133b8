"""Decentralized identity management for multi-stakeholder mobile networks.

Layers, bottom up:

* :mod:`did6g.identity`   keys, DIDs, DID documents
* :mod:`did6g.registry`   governed, hash-chained registry with modeled consensus
* :mod:`did6g.agent`      agents, wallets, mutually authenticated channels
* :mod:`did6g.credential` verifiable credentials and presentations
* :mod:`did6g.scenarios`  multi-domain end-to-end scenarios and the CLI behind ``did6g``
"""

__version__ = "0.1.0"
