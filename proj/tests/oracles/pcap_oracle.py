#!/usr/bin/env python3
"""Independent dump of the pcap fixtures with scapy.

Used once to derive the frozen expectations in tests/unit/capture_test.cpp:
frame counts, TCP flags, ports, DNS qnames and per-file SHA-256 digests.
"""
import hashlib
import sys

from scapy.all import DNS, IP, TCP, UDP, rdpcap


def dump(path):
    with open(path, "rb") as f:
        print(path, "sha256", hashlib.sha256(f.read()).hexdigest())
    pkts = rdpcap(path)
    print(path, "frames", len(pkts))
    for i, p in enumerate(pkts, 1):
        line = [str(i), "%.6f" % float(p.time), "len=%d" % len(p)]
        if IP in p:
            line += [p[IP].src, p[IP].dst, "ttl=%d" % p[IP].ttl]
        if TCP in p:
            line += ["tcp", str(p[TCP].sport), str(p[TCP].dport), "flags=" + str(p[TCP].flags),
                     "seq=%d" % p[TCP].seq, "ack=%d" % p[TCP].ack]
        elif UDP in p:
            line += ["udp", str(p[UDP].sport), str(p[UDP].dport)]
        if DNS in p and p[DNS].qd is not None:
            line += ["qname=" + p[DNS].qd.qname.decode().rstrip(".")]
        print("  " + " ".join(line))


if __name__ == "__main__":
    for path in sys.argv[1:]:
        dump(path)
