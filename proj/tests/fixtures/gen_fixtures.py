#!/usr/bin/env python3
"""Hand-assemble the pcap fixtures used by the test suites.

Only `struct` is used so the byte layout is explicit. Re-running the script
reproduces the committed files byte for byte.
"""
import os
import struct

HERE = os.path.dirname(os.path.abspath(__file__))

BASE_TS = 1700000000


def mac(s):
    return bytes(int(x, 16) for x in s.split(":"))


def ip4(s):
    return bytes(int(x) for x in s.split("."))


def checksum(data):
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack("!%dH" % (len(data) // 2), data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def ipv4(src, dst, proto, payload, ttl=64, ident=0):
    total_len = 20 + len(payload)
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total_len, ident, 0x4000, ttl,
                      proto, 0, ip4(src), ip4(dst))
    hdr = hdr[:10] + struct.pack("!H", checksum(hdr)) + hdr[12:]
    return hdr + payload


FIN, SYN, RST, PSH, ACK, URG = 0x01, 0x02, 0x04, 0x08, 0x10, 0x20


def tcp(sport, dport, seq, ack, flags, payload=b"", window=64240):
    return struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, flags,
                       window, 0, 0) + payload


def udp(sport, dport, payload):
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


def icmp_echo(ident, seq, data=b"ping"):
    body = struct.pack("!BBHHH", 8, 0, 0, ident, seq) + data
    return body[:2] + struct.pack("!H", checksum(body)) + body[4:]


def ether(src, dst, payload, ethertype=0x0800):
    return mac(dst) + mac(src) + struct.pack("!H", ethertype) + payload


def pcap_bytes(frames, big_endian=False, nano=False, linktype=1):
    e = ">" if big_endian else "<"
    magic = 0xA1B23C4D if nano else 0xA1B2C3D4
    out = struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for ts_sec, ts_frac, data in frames:
        if nano:
            ts_frac = ts_frac * 1000 + 789
        out += struct.pack(e + "IIII", ts_sec, ts_frac, len(data), len(data))
        out += data
    return out


def write(name, data):
    with open(os.path.join(HERE, name), "wb") as f:
        f.write(data)


def dns_name(name):
    out = b""
    for label in name.split("."):
        out += bytes([len(label)]) + label.encode()
    return out + b"\x00"


CLIENT_MAC = "b8:27:eb:11:22:33"
SERVER_MAC = "00:1a:2b:3c:4d:5e"
GW_MAC = "02:00:00:00:00:01"


def handshake_frames():
    c, s = "10.0.0.2", "10.0.0.1"
    return [
        (BASE_TS, 0, ether(CLIENT_MAC, SERVER_MAC,
                           ipv4(c, s, 6, tcp(49152, 80, 1000, 0, SYN), ttl=64))),
        (BASE_TS, 1500, ether(SERVER_MAC, CLIENT_MAC,
                              ipv4(s, c, 6, tcp(80, 49152, 5000, 1001, SYN | ACK), ttl=128))),
        (BASE_TS, 2750, ether(CLIENT_MAC, SERVER_MAC,
                              ipv4(c, s, 6, tcp(49152, 80, 1001, 5001, ACK), ttl=64))),
    ]


def dns_frames():
    c, s = "10.0.0.2", "10.0.0.53"
    query = struct.pack("!HHHHHH", 0x1a2b, 0x0100, 1, 0, 0, 0) + dns_name("sensor.local") + struct.pack("!HH", 1, 1)
    answer = (struct.pack("!HHHHHH", 0x1a2b, 0x8180, 1, 1, 0, 0) + dns_name("sensor.local")
              + struct.pack("!HH", 1, 1) + b"\xc0\x0c" + struct.pack("!HHIH", 1, 1, 300, 4) + ip4("10.0.0.7"))
    return [
        (BASE_TS + 10, 0, ether(CLIENT_MAC, GW_MAC, ipv4(c, s, 17, udp(53000, 53, query)))),
        (BASE_TS + 10, 4200, ether(GW_MAC, CLIENT_MAC, ipv4(s, c, 17, udp(53, 53000, answer), ttl=255))),
    ]


def tls_client_hello(sni):
    random = bytes(range(32))
    sni_bytes = sni.encode()
    server_name = struct.pack("!BH", 0, len(sni_bytes)) + sni_bytes
    sni_list = struct.pack("!H", len(server_name)) + server_name
    ext = struct.pack("!HH", 0, len(sni_list)) + sni_list
    body = (struct.pack("!H", 0x0303) + random + b"\x00" + struct.pack("!H", 2) + b"\x13\x01"
            + b"\x01\x00" + struct.pack("!H", len(ext)) + ext)
    hs = b"\x01" + struct.pack("!I", len(body))[1:] + body
    return b"\x16" + struct.pack("!HH", 0x0301, len(hs)) + hs


def mqtt_connect(client_id):
    var = b"\x00\x04MQTT\x04\x02\x00\x3c"
    payload = struct.pack("!H", len(client_id)) + client_id.encode()
    rem = var + payload
    return bytes([0x10, len(rem)]) + rem


def mqtt_publish(topic, msg):
    rem = struct.pack("!H", len(topic)) + topic.encode() + msg.encode()
    return bytes([0x30, len(rem)]) + rem


def modbus_read(trans, unit, func=3):
    pdu = bytes([func]) + struct.pack("!HH", 0, 10)
    return struct.pack("!HHHB", trans, 0, len(pdu) + 1, unit) + pdu


def tcp_session(frames, t0, cmac, smac, c, s, sport, dport, payloads, close="fin"):
    """Append a full TCP exchange: handshake, client payloads, then close."""
    seq_c, seq_s = 100, 900
    step = [0]

    def at():
        step[0] += 1
        return t0 + step[0] * 1000

    def push(src_is_client, flags, data=b""):
        nonlocal seq_c, seq_s
        if src_is_client:
            pkt = tcp(sport, dport, seq_c, seq_s, flags, data)
            frames.append((BASE_TS + 20, at(), ether(cmac, smac, ipv4(c, s, 6, pkt, ttl=64))))
            seq_c += len(data) + (1 if flags & (SYN | FIN) else 0)
        else:
            pkt = tcp(dport, sport, seq_s, seq_c, flags, data)
            frames.append((BASE_TS + 20, at(), ether(smac, cmac, ipv4(s, c, 6, pkt, ttl=63))))
            seq_s += len(data) + (1 if flags & (SYN | FIN) else 0)

    push(True, SYN)
    push(False, SYN | ACK)
    push(True, ACK)
    for data in payloads:
        push(True, PSH | ACK, data)
        push(False, ACK)
    if close == "fin":
        push(True, FIN | ACK)
        push(False, FIN | ACK)
        push(True, ACK)
    elif close == "rst":
        push(False, RST)


def mixed_frames():
    frames = []
    cam, plc, broker, web = "192.168.1.10", "192.168.1.20", "192.168.1.30", "52.0.0.1"
    cam_mac, plc_mac, broker_mac, gw_mac = "b8:27:eb:aa:bb:01", "00:80:f4:00:00:02", "dc:a6:32:00:00:03", GW_MAC
    tcp_session(frames, 0, cam_mac, gw_mac, cam, web, 40001, 80,
                [b"GET /firmware/v2.bin HTTP/1.1\r\nHost: updates.example\r\n\r\n"])
    tcp_session(frames, 100000, cam_mac, broker_mac, cam, broker, 40002, 1883,
                [mqtt_connect("cam-01"), mqtt_publish("home/cam/motion", "1")], close="rst")
    tcp_session(frames, 200000, broker_mac, plc_mac, broker, plc, 40003, 502,
                [modbus_read(1, 17), modbus_read(2, 17, func=6)])
    tcp_session(frames, 300000, cam_mac, gw_mac, cam, "8.8.8.8", 40004, 443,
                [tls_client_hello("cloud.example")])
    frames.append((BASE_TS + 20, 400000, ether(cam_mac, gw_mac, ipv4(cam, "8.8.8.8", 1, icmp_echo(7, 1)))))
    for t, fr in enumerate(dns_frames()):
        frames.append((BASE_TS + 20, 500000 + t * 1000, fr[2]))
    frames.sort(key=lambda f: (f[0], f[1]))
    return frames


def main():
    hs = handshake_frames()
    write("handshake.pcap", pcap_bytes(hs))
    write("handshake_be.pcap", pcap_bytes(hs, big_endian=True))
    write("handshake_ns.pcap", pcap_bytes(hs, nano=True))
    write("dns_query.pcap", pcap_bytes(dns_frames()))
    write("empty.pcap", pcap_bytes([]))
    write("iot_mixed.pcap", pcap_bytes(mixed_frames()))
    full = pcap_bytes(hs)
    write("truncated.pcap", full[:-10])
    raw = [(ts, us, data[14:]) for ts, us, data in hs]
    write("handshake_rawip.pcap", pcap_bytes(raw, linktype=101))
    # pcapng section header block magic
    write("not_a_pcap.pcapng", b"\x0a\x0d\x0d\x0a" + b"\x00" * 28)


if __name__ == "__main__":
    main()
