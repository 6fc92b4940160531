"""evoplace: analytical global placement with evolvable strategy hooks.

The placement engine minimizes smoothed wirelength plus a density penalty
over cell positions.  Its initialization, preconditioner, and optimizer
policy can each be replaced by a small sandboxed strategy program, and the
surrounding tooling generates, selects, evolves, and design-space-explores
those programs either against a remote chat-completion backend or a fully
deterministic offline mock.
"""

__version__ = "0.1.0"
