"""Who may read, write and administer the registry."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Optional

from ..errors import NotAdmin


class PolicyKind(str, Enum):
    PUBLIC_PERMISSIONLESS = "PublicPermissionless"
    PUBLIC_PERMISSIONED = "PublicPermissioned"
    PRIVATE_PERMISSIONED = "PrivatePermissioned"


@dataclass(frozen=True)
class Acl:
    """Either every entity (``members is None``) or an explicit set of DIDs."""

    members: Optional[frozenset[str]] = None

    @classmethod
    def everyone(cls) -> "Acl":
        return cls(None)

    @classmethod
    def of(cls, dids: Iterable[str]) -> "Acl":
        return cls(frozenset(str(d) for d in dids))

    @property
    def is_open(self) -> bool:
        return self.members is None

    def allows(self, did: Optional[str]) -> bool:
        if self.members is None:
            return True
        return did is not None and str(did) in self.members

    def to_wire(self) -> Any:
        return "*" if self.members is None else sorted(self.members)

    @classmethod
    def from_wire(cls, data: Any) -> "Acl":
        if data == "*":
            return cls.everyone()
        if not isinstance(data, list):
            raise ValueError("ACL must be '*' or a list of DIDs")
        return cls.of(data)


@dataclass(frozen=True)
class GovernancePolicy:
    kind: PolicyKind
    readers: Acl
    writers: Acl
    admins: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        object.__setattr__(self, "admins", frozenset(str(a) for a in self.admins))
        if self.kind is PolicyKind.PUBLIC_PERMISSIONLESS:
            if not (self.readers.is_open and self.writers.is_open):
                raise ValueError("a public permissionless registry lets every entity read and write")
        elif self.kind is PolicyKind.PUBLIC_PERMISSIONED:
            if not self.readers.is_open or self.writers.is_open:
                raise ValueError("a public permissioned registry has open reads and an explicit writer set")
        elif self.readers.is_open or self.writers.is_open:
            raise ValueError("a private permissioned registry has explicit reader and writer sets")

    @classmethod
    def public_permissionless(cls) -> "GovernancePolicy":
        return cls(PolicyKind.PUBLIC_PERMISSIONLESS, Acl.everyone(), Acl.everyone())

    @classmethod
    def public_permissioned(cls, writers: Iterable[str], admins: Iterable[str] = ()) -> "GovernancePolicy":
        return cls(PolicyKind.PUBLIC_PERMISSIONED, Acl.everyone(), Acl.of(writers), frozenset(admins))

    @classmethod
    def private_permissioned(
        cls, readers: Iterable[str], writers: Iterable[str], admins: Iterable[str] = ()
    ) -> "GovernancePolicy":
        return cls(PolicyKind.PRIVATE_PERMISSIONED, Acl.of(readers), Acl.of(writers), frozenset(admins))

    def amend(
        self,
        admin: str,
        *,
        add_readers: Iterable[str] = (),
        add_writers: Iterable[str] = (),
        remove_readers: Iterable[str] = (),
        remove_writers: Iterable[str] = (),
    ) -> "GovernancePolicy":
        """Return a policy with adjusted ACLs. Only admins of permissioned registries may amend."""
        if self.kind is PolicyKind.PUBLIC_PERMISSIONLESS or str(admin) not in self.admins:
            raise NotAdmin(f"{admin} may not amend this policy")

        def adjust(acl: Acl, add: Iterable[str], remove: Iterable[str]) -> Acl:
            if acl.is_open:
                return acl
            return Acl.of((acl.members | {str(d) for d in add}) - {str(d) for d in remove})

        return GovernancePolicy(
            self.kind,
            adjust(self.readers, add_readers, remove_readers),
            adjust(self.writers, add_writers, remove_writers),
            self.admins,
        )

    def to_wire(self) -> dict:
        return {
            "kind": self.kind.value,
            "readers": self.readers.to_wire(),
            "writers": self.writers.to_wire(),
            "admins": sorted(self.admins),
        }

    @classmethod
    def from_wire(cls, data: dict) -> "GovernancePolicy":
        return cls(
            PolicyKind(data["kind"]),
            Acl.from_wire(data.get("readers", "*")),
            Acl.from_wire(data.get("writers", "*")),
            frozenset(data.get("admins", ())),
        )
