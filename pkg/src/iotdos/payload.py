"""Message-structure features carried by every transition.

Device traffic uses the all-zero payload.  Attack traffic follows the four
HULK obfuscation properties: a random user agent from a fixed list, a forged
referrer (the host itself or a pre-listed site), keep-alive requested on a
coin flip, and a randomised URL on every request.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class PayloadFeatures:
    ua_code: int = 0
    ref_code: int = 0
    keepalive: int = 0
    url_unique: int = 0

    def as_tuple(self):
        return (self.ua_code, self.ref_code, self.keepalive, self.url_unique)


DEVICE_PAYLOAD = PayloadFeatures()


@dataclass(frozen=True)
class HulkProfile:
    """Cardinalities of the attacker's user-agent and referrer-site lists."""

    n_user_agents: int = 8
    n_referrer_sites: int = 5
    keepalive_p: float = 0.5

    def sample(self, rng):
        # ua codes 1..n (0 is the device default); referrer 1 = host, 2.. = sites
        ua = 1 + int(rng.integers(self.n_user_agents))
        ref = 1 + int(rng.integers(self.n_referrer_sites + 1))
        keepalive = int(rng.random() < self.keepalive_p)
        return PayloadFeatures(ua, ref, keepalive, 1)
