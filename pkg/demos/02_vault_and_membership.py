"""The security vault: folders, tenant registration, membership checks.

Builds a small multi-cloud registry, registers tenants against personal
secrets, then shows membership verification, secret matching, and the
snapshot file format.
"""

import json
import tempfile
from pathlib import Path

from crossrealm.vault import Vault

vault = Vault()

# Cloud folders hold the authoritative root keys; sub-domain subfolders
# hold the sub-domain keys.
for cloud in ("CloudA", "CloudB"):
    vault.register_cloud(cloud, b"master-" + cloud.encode())
vault.register_subdomain("CloudA", "bi")
vault.register_subdomain("CloudA", "hr")
vault.register_subdomain("CloudB", "analytics")

# Tenants register with provider details plus personal secrets; the vault
# stores the signature and hands back (IDr, IDs, private part).
idr, ids, private = vault.register_tenant(
    "CloudA", "bi", "alice",
    primary_details={"plan": "enterprise", "region": "eu"},
    extension_metadata={"spouse": "bob", "pet": "rex", "first_school": "hilltop"},
)
print("alice registered under CloudA/bi")
print("  IDr(cloud membership):     ", idr.hex()[:32], "...")
print("  IDs(sub-domain membership):", ids.hex()[:32], "...")
print("  private part (not stored): ", private.hex()[:32], "...")

# Membership verification is a pure read: Valid only for stored pairs.
print("verify (IDr, IDs):", vault.verify_membership(idr, ids))
wrong_ids = vault.clouds["CloudB"].subdomains["analytics"].subdomain_key
print("verify IDr of CloudA against IDs of CloudB/analytics:",
      vault.verify_membership(idr, wrong_ids))

# Personal secrets must all match; subsets and wrong values are rejected.
print("exact answers:",
      vault.match_personal_secrets("alice", {"spouse": "bob", "pet": "rex",
                                             "first_school": "hilltop"}))
print("missing class:",
      vault.match_personal_secrets("alice", {"spouse": "bob", "pet": "rex"}))
print("wrong value:  ",
      vault.match_personal_secrets("alice", {"spouse": "bob", "pet": "cat",
                                             "first_school": "hilltop"}))

# Snapshots serialize the whole folder structure as one JSON document.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "vault.json"
    vault.save_snapshot(path)
    doc = json.loads(path.read_text())
    print("snapshot top-level keys:", list(doc))
    print("clouds in snapshot:", sorted(doc["clouds"]))
    reloaded = Vault.load_snapshot(path)
    print("reloaded vault verifies the same pair:",
          reloaded.verify_membership(idr, ids))
