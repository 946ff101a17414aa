#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "simcan/bytes.hpp"
#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"

namespace simcan::wire {

enum class BusKind { PUBLIC, SECURE };

inline std::string_view bus_kind_name(BusKind k) {
  return k == BusKind::PUBLIC ? "public" : "secure";
}

/// CAN identifier. Lower raw value wins arbitration.
struct FrameId {
  std::uint32_t raw = 0;
  BusKind bus = BusKind::PUBLIC;
  bool extended = false;

  FrameId() = default;
  FrameId(std::uint32_t r, BusKind b, bool ext = false)
      : raw(r), bus(b), extended(ext) {
    const std::uint32_t limit = ext ? (1u << 29) : (1u << 11);
    if (r >= limit) raise(Err::MALFORMED_FRAME, "frame id out of range");
  }

  bool operator==(const FrameId& o) const {
    return raw == o.raw && bus == o.bus && extended == o.extended;
  }
  bool operator<(const FrameId& o) const { return raw < o.raw; }
};

// Byte offsets of the two frame classes.
struct WireLayout {
  // Public frame payload: [counter:2 BE][data:N][digest:D]
  static constexpr std::size_t kPublicCounterOffset = 0;
  static constexpr std::size_t kPublicDataOffset = 2;
  static constexpr std::size_t kPublicMin = 26;
  static constexpr std::size_t kPublicMax = 64;

  // Secure frame: [msg_type:1][sender:1][iv:16][ciphertext][tag:16]
  static constexpr std::size_t kSecureTypeOffset = 0;
  static constexpr std::size_t kSecureSenderOffset = 1;
  static constexpr std::size_t kSecureIvOffset = 2;
  static constexpr std::size_t kSecureBodyOffset = 18;
  static constexpr std::size_t kSecureTagLen = 16;
  static constexpr std::size_t kSecureMaxCiphertext = 64;
};

/// Signed data-plane frame. The digest covers data || counter (big-endian),
/// computed by the sender under the privilege-level key.
struct PublicFrame {
  FrameId id;
  std::uint16_t counter = 0;
  Bytes data;
  Bytes digest;

  std::size_t payload_size() const { return 2 + data.size() + digest.size(); }

  bool operator==(const PublicFrame& o) const {
    return id == o.id && counter == o.counter && data == o.data &&
           digest == o.digest;
  }
};

enum class SecureMsgType : std::uint8_t {
  DISCOVERY = 1,
  PUBKEY_G = 2,
  PUBKEY_N = 3,
  SECRET_G = 4,
  SECRET_N = 5,
  KEY_DELIVERY = 6,
  KEY_ROLL = 7,
  DEPRECATE = 8,
  SHORT_KEY = 9,
  CHALLENGE = 10,
  CHALLENGE_SHARE = 11,
  CHALLENGE_RESP = 12,
};

inline std::string_view secure_msg_name(SecureMsgType t) {
  switch (t) {
    case SecureMsgType::DISCOVERY: return "DISCOVERY";
    case SecureMsgType::PUBKEY_G: return "PUBKEY_G";
    case SecureMsgType::PUBKEY_N: return "PUBKEY_N";
    case SecureMsgType::SECRET_G: return "SECRET_G";
    case SecureMsgType::SECRET_N: return "SECRET_N";
    case SecureMsgType::KEY_DELIVERY: return "KEY_DELIVERY";
    case SecureMsgType::KEY_ROLL: return "KEY_ROLL";
    case SecureMsgType::DEPRECATE: return "DEPRECATE";
    case SecureMsgType::SHORT_KEY: return "SHORT_KEY";
    case SecureMsgType::CHALLENGE: return "CHALLENGE";
    case SecureMsgType::CHALLENGE_SHARE: return "CHALLENGE_SHARE";
    case SecureMsgType::CHALLENGE_RESP: return "CHALLENGE_RESP";
  }
  return "UNKNOWN";
}

inline bool is_secure_msg_type(std::uint8_t b) { return b >= 1 && b <= 12; }

/// Encrypted control-plane frame. Type and sender stay cleartext so
/// receivers can route before decrypting; the body is AES-256-CBC under the
/// session-appropriate key with a trailing CMAC over everything before it.
struct SecureFrame {
  FrameId id;
  std::uint8_t sender = 0;
  SecureMsgType msg_type = SecureMsgType::DISCOVERY;
  std::array<std::uint8_t, 16> iv{};
  Bytes body;  // plaintext; ciphertext exists only on the wire

  bool operator==(const SecureFrame& o) const {
    return id == o.id && sender == o.sender && msg_type == o.msg_type &&
           iv == o.iv && body == o.body;
  }
};

inline Bytes encode_public(const PublicFrame& frame) {
  const std::size_t total = frame.payload_size();
  if (total > WireLayout::kPublicMax)
    raise(Err::FRAME_TOO_LONG, "public payload exceeds 64 bytes");
  if (total < WireLayout::kPublicMin)
    raise(Err::FRAME_TOO_SHORT, "public payload below 26 bytes");
  Bytes out;
  out.reserve(total);
  put_u16_be(out, frame.counter);
  append(out, frame.data);
  append(out, frame.digest);
  return out;
}

inline PublicFrame decode_public(ByteView bytes, int digest_len_bits,
                                 FrameId id = FrameId()) {
  const std::size_t digest_len = static_cast<std::size_t>(digest_len_bits) / 8;
  if (bytes.size() < WireLayout::kPublicMin ||
      bytes.size() > WireLayout::kPublicMax)
    raise(Err::MALFORMED_FRAME, "public payload length out of [26, 64]");
  if (bytes.size() < 2 + digest_len)
    raise(Err::MALFORMED_FRAME, "payload shorter than counter + digest");
  PublicFrame f;
  f.id = id;
  f.counter = get_u16_be(bytes, 0);
  f.data.assign(bytes.begin() + 2, bytes.end() - static_cast<long>(digest_len));
  f.digest.assign(bytes.end() - static_cast<long>(digest_len), bytes.end());
  return f;
}

/// MAC input for a public frame: data || counter (big-endian).
inline Bytes public_mac_input(ByteView data, std::uint16_t counter) {
  Bytes msg(data.begin(), data.end());
  put_u16_be(msg, counter);
  return msg;
}

namespace detail {
inline crypto::KeyMaterial secure_key(const crypto::KeyMaterial& key) {
  return crypto::expand_to_aes_key(key);
}
inline Bytes secure_tag(const crypto::KeyMaterial& aes_key, ByteView authed) {
  return crypto::mac(crypto::MacAlgo(crypto::MacVariant::CMAC_AES256, 128),
                     aes_key, authed);
}
}  // namespace detail

/// Encrypt-then-MAC encoding. Short keys are widened deterministically;
/// the ciphertext may not exceed the 64-byte data field.
inline Bytes encode_secure(const SecureFrame& frame, const crypto::KeyMaterial& key) {
  const crypto::KeyMaterial aes_key = detail::secure_key(key);
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(frame.msg_type));
  put_u8(out, frame.sender);
  append(out, ByteView(frame.iv.data(), frame.iv.size()));
  Bytes ct = crypto::aes_cbc_encrypt(aes_key, ByteView(frame.iv.data(), frame.iv.size()),
                                     frame.body);
  if (ct.size() > WireLayout::kSecureMaxCiphertext)
    raise(Err::FRAME_TOO_LONG, "secure body exceeds one frame");
  append(out, ct);
  append(out, detail::secure_tag(aes_key, out));
  return out;
}

struct SecureHeader {
  SecureMsgType msg_type;
  std::uint8_t sender;
  std::array<std::uint8_t, 16> iv;
};

/// Cleartext header inspection; used for routing before key selection.
inline SecureHeader peek_secure(ByteView bytes) {
  if (bytes.size() < WireLayout::kSecureBodyOffset + WireLayout::kSecureTagLen +
                         crypto::kAesBlock)
    raise(Err::MALFORMED_FRAME, "secure frame too short");
  if (!is_secure_msg_type(bytes[0]))
    raise(Err::MALFORMED_FRAME, "unknown secure message type");
  SecureHeader h{static_cast<SecureMsgType>(bytes[0]), bytes[1], {}};
  std::copy(bytes.begin() + 2, bytes.begin() + 18, h.iv.begin());
  return h;
}

inline SecureFrame decode_secure(ByteView bytes, const crypto::KeyMaterial& key,
                                 FrameId id = FrameId(0, BusKind::SECURE)) {
  const SecureHeader h = peek_secure(bytes);
  const crypto::KeyMaterial aes_key = detail::secure_key(key);
  const std::size_t ct_len =
      bytes.size() - WireLayout::kSecureBodyOffset - WireLayout::kSecureTagLen;
  if (ct_len == 0 || ct_len % crypto::kAesBlock != 0)
    raise(Err::MALFORMED_FRAME, "secure ciphertext not block-aligned");
  const ByteView authed = bytes.first(bytes.size() - WireLayout::kSecureTagLen);
  const ByteView tag = bytes.last(WireLayout::kSecureTagLen);
  if (!bytes_equal(detail::secure_tag(aes_key, authed), tag))
    raise(Err::DECRYPT_ERROR, "secure frame tag mismatch");
  SecureFrame f;
  f.id = id;
  f.msg_type = h.msg_type;
  f.sender = h.sender;
  f.iv = h.iv;
  f.body = crypto::aes_cbc_decrypt(
      aes_key, ByteView(h.iv.data(), h.iv.size()),
      bytes.subspan(WireLayout::kSecureBodyOffset, ct_len));
  return f;
}

/// One line of the frame-dump log: timestamp_us<TAB>bus<TAB>id<TAB>hexbytes.
inline std::string dump_line(std::uint64_t time_us, BusKind bus, std::uint32_t id,
                             ByteView bytes) {
  std::string line = std::to_string(time_us);
  line += '\t';
  line += bus_kind_name(bus);
  line += "\t0x";
  char idbuf[16];
  std::snprintf(idbuf, sizeof(idbuf), "%x", id);
  line += idbuf;
  line += '\t';
  line += hex_encode(bytes);
  return line;
}

}  // namespace simcan::wire
