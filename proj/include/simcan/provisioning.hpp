#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simcan/bytes.hpp"
#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"
#include "simcan/frame.hpp"
#include "simcan/keys.hpp"

namespace simcan::prov {

using keys::Level;
using keys::NodeId;
using sim::Time;

enum class SessionState {
  IDLE,
  DISCOVERED,
  KEYPAIR_SENT,
  PEER_KEY_RECEIVED,
  SECRETS_EXCHANGED,
  KSH_ESTABLISHED,
  KEYS_DELIVERED,
  FAILED,
};

inline std::string_view session_state_name(SessionState s) {
  switch (s) {
    case SessionState::IDLE: return "IDLE";
    case SessionState::DISCOVERED: return "DISCOVERED";
    case SessionState::KEYPAIR_SENT: return "KEYPAIR_SENT";
    case SessionState::PEER_KEY_RECEIVED: return "PEER_KEY_RECEIVED";
    case SessionState::SECRETS_EXCHANGED: return "SECRETS_EXCHANGED";
    case SessionState::KSH_ESTABLISHED: return "KSH_ESTABLISHED";
    case SessionState::KEYS_DELIVERED: return "KEYS_DELIVERED";
    case SessionState::FAILED: return "FAILED";
  }
  return "?";
}

struct DiscoveryRecord {
  NodeId node = -1;
  Level declared_level = 0;
  bool is_sub_domain_member = false;
};

/// Gateway-side state for one node's provisioning. The gateway uses a fresh
/// ephemeral keypair for every node and for every retry.
struct ProvisioningSession {
  NodeId node = -1;
  Level node_level = 0;
  SessionState state = SessionState::IDLE;
  std::optional<crypto::KeyMaterial> gw_private, gw_public;
  std::optional<crypto::KeyMaterial> node_public;
  std::optional<Bytes> ecdh_basis;
  std::optional<crypto::Nonce> nonce_gw, nonce_node;
  std::optional<crypto::KeyMaterial> transport_key;
  std::optional<crypto::KeyMaterial> established_shared_key;
  Time deadline_us = 0;
  int attempt = 0;
  std::size_t keys_acked = 0;
  std::size_t keys_sent = 0;
};

struct TranscriptEntry {
  int step = 0;
  std::string direction;  // "gw->node" | "node->gw"
  wire::SecureMsgType msg_type = wire::SecureMsgType::DISCOVERY;
  std::size_t len = 0;  // ciphertext length on the wire
};

// --- key derivations -------------------------------------------------------

/// Session transport key protecting the nonce exchange.
inline crypto::KeyMaterial derive_transport_key(const Bytes& ecdh_shared) {
  return crypto::kdf({ecdh_shared}, "TRANSPORT", 32, crypto::KeyKind::SHARED_KEY);
}

/// Pairwise root-of-trust key: both sides mix the ECDH output with both
/// nonces, gateway side first.
inline crypto::KeyMaterial derive_shared_key(const Bytes& ecdh_shared,
                                             const crypto::Nonce& nonce_gw,
                                             const crypto::Nonce& nonce_node) {
  Bytes ss_gw = ecdh_shared;
  append(ss_gw, nonce_gw.view());
  Bytes ss_node = ecdh_shared;
  append(ss_node, nonce_node.view());
  return crypto::kdf({ss_gw, ss_node}, "KSH", 32, crypto::KeyKind::SHARED_KEY);
}

// --- secure-frame body codecs ----------------------------------------------
// Bodies are plaintext here; frame_codec encrypts them on the way out.

struct DiscoveryBody {
  enum class Kind : std::uint8_t { REQUEST = 0, RESPONSE = 1, RESYNC = 2 };
  Kind kind = Kind::REQUEST;
  Level level = 0;
  bool sub_domain_member = false;
};

inline Bytes encode_discovery(const DiscoveryBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.kind));
  put_u8(out, static_cast<std::uint8_t>(b.level));
  put_u8(out, b.sub_domain_member ? 1 : 0);
  return out;
}

inline DiscoveryBody decode_discovery(ByteView body) {
  if (body.size() < 3) raise(Err::MALFORMED_FRAME, "discovery body too short");
  DiscoveryBody b;
  b.kind = static_cast<DiscoveryBody::Kind>(body[0]);
  b.level = body[1];
  b.sub_domain_member = body[2] != 0;
  return b;
}

struct PubKeyBody {
  NodeId target = -1;
  Bytes key;  // 32 bytes
};

inline Bytes encode_pubkey(const PubKeyBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.target));
  append(out, b.key);
  return out;
}

inline PubKeyBody decode_pubkey(ByteView body) {
  if (body.size() != 1 + crypto::kEccKeyLen)
    raise(Err::MALFORMED_FRAME, "pubkey body must be 33 bytes");
  PubKeyBody b;
  b.target = body[0];
  b.key.assign(body.begin() + 1, body.end());
  return b;
}

inline Bytes encode_secret(const crypto::Nonce& n) {
  return Bytes(n.bytes.begin(), n.bytes.end());
}

inline crypto::Nonce decode_secret(ByteView body) {
  if (body.size() != 16) raise(Err::MALFORMED_FRAME, "secret body must be 16 bytes");
  crypto::Nonce n;
  std::copy(body.begin(), body.end(), n.bytes.begin());
  return n;
}

/// One delivered key entry. 32-byte keys ship one per frame; shorter keys
/// would fit two but a uniform one-entry frame keeps the transcript simple.
struct KeyDeliveryBody {
  enum class Kind : std::uint8_t { ENTRY = 0, ACK = 1 };
  Kind kind = Kind::ENTRY;
  Level level = 0;
  std::uint32_t epoch = 0;
  bool is_short = false;
  Bytes key;
};

inline Bytes encode_key_delivery(const KeyDeliveryBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.kind));
  if (b.kind == KeyDeliveryBody::Kind::ENTRY) {
    put_u8(out, static_cast<std::uint8_t>(b.level));
    put_u32_be(out, b.epoch);
    put_u8(out, b.is_short ? 1 : 0);
    put_u8(out, static_cast<std::uint8_t>(b.key.size()));
    append(out, b.key);
  }
  return out;
}

inline KeyDeliveryBody decode_key_delivery(ByteView body) {
  if (body.empty()) raise(Err::MALFORMED_FRAME, "empty key delivery body");
  KeyDeliveryBody b;
  b.kind = static_cast<KeyDeliveryBody::Kind>(body[0]);
  if (b.kind == KeyDeliveryBody::Kind::ACK) return b;
  if (body.size() < 8) raise(Err::MALFORMED_FRAME, "key delivery body too short");
  b.level = body[1];
  b.epoch = get_u32_be(body, 2);
  b.is_short = body[6] != 0;
  const std::size_t key_len = body[7];
  if (body.size() != 8 + key_len)
    raise(Err::MALFORMED_FRAME, "key delivery length mismatch");
  b.key.assign(body.begin() + 8, body.end());
  return b;
}

struct KeyRollBody {
  Level level = 0;
  std::uint32_t epoch = 0;  // epoch of the NEW key
  Bytes key;
};

inline Bytes encode_key_roll(const KeyRollBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.level));
  put_u32_be(out, b.epoch);
  put_u8(out, static_cast<std::uint8_t>(b.key.size()));
  append(out, b.key);
  return out;
}

inline KeyRollBody decode_key_roll(ByteView body) {
  if (body.size() < 6) raise(Err::MALFORMED_FRAME, "key roll body too short");
  KeyRollBody b;
  b.level = body[0];
  b.epoch = get_u32_be(body, 1);
  const std::size_t key_len = body[5];
  if (body.size() != 6 + key_len)
    raise(Err::MALFORMED_FRAME, "key roll length mismatch");
  b.key.assign(body.begin() + 6, body.end());
  return b;
}

struct DeprecateBody {
  Level level = 0;
  std::uint32_t epoch = 0;  // epoch being deprecated
};

inline Bytes encode_deprecate(const DeprecateBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.level));
  put_u32_be(out, b.epoch);
  return out;
}

inline DeprecateBody decode_deprecate(ByteView body) {
  if (body.size() != 5) raise(Err::MALFORMED_FRAME, "deprecate body must be 5 bytes");
  return DeprecateBody{body[0], get_u32_be(body, 1)};
}

struct ShortKeyBody {
  Level level = 0;
  bool enable = true;
};

inline Bytes encode_short_key(const ShortKeyBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.level));
  put_u8(out, b.enable ? 1 : 0);
  return out;
}

inline ShortKeyBody decode_short_key(ByteView body) {
  if (body.size() != 2) raise(Err::MALFORMED_FRAME, "short key body must be 2 bytes");
  return ShortKeyBody{body[0], body[1] != 0};
}

struct ChallengeBody {
  NodeId target = -1;
  crypto::Nonce nonce;
};

inline Bytes encode_challenge(const ChallengeBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.target));
  append(out, b.nonce.view());
  return out;
}

inline ChallengeBody decode_challenge(ByteView body) {
  if (body.size() != 17) raise(Err::MALFORMED_FRAME, "challenge body must be 17 bytes");
  ChallengeBody b;
  b.target = body[0];
  std::copy(body.begin() + 1, body.end(), b.nonce.bytes.begin());
  return b;
}

struct ChallengeRespBody {
  NodeId target = -1;
  Bytes response;  // 16 bytes
};

inline Bytes encode_challenge_resp(const ChallengeRespBody& b) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(b.target));
  append(out, b.response);
  return out;
}

inline ChallengeRespBody decode_challenge_resp(ByteView body) {
  if (body.size() != 17)
    raise(Err::MALFORMED_FRAME, "challenge response body must be 17 bytes");
  ChallengeRespBody b;
  b.target = body[0];
  b.response.assign(body.begin() + 1, body.end());
  return b;
}

/// Well-known plant-initialization key protecting pre-trust frames
/// (discovery and public-key exchange). Physical access control at the
/// plant is the actual barrier; this keeps the codec uniform.
inline const crypto::KeyMaterial& bootstrap_key() {
  static const crypto::KeyMaterial k(
      hex_decode_or_empty(
          "73696d63616e2d706c616e742d696e69742d626f6f7473747261702d6b657900"),
      crypto::KeyKind::SHARED_KEY);
  return k;
}

}  // namespace simcan::prov
