#pragma once

#include <openssl/core_names.h>
#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "simcan/bytes.hpp"
#include "simcan/errors.hpp"
#include "simcan/rng.hpp"

namespace simcan::crypto {

enum class KeyKind { PL_KEY, SHARED_KEY, CARMAKER_KEY, ECC_PRIVATE, ECC_PUBLIC };

constexpr std::size_t kAesBlock = 16;
constexpr std::size_t kEccKeyLen = 32;

/// Octet-string key with a role tag. Symmetric keys are 8, 16 or 32 bytes;
/// curve keys are exactly 32.
struct KeyMaterial {
  Bytes bytes;
  KeyKind kind = KeyKind::PL_KEY;

  KeyMaterial() = default;
  KeyMaterial(Bytes b, KeyKind k) : bytes(std::move(b)), kind(k) {
    const std::size_t n = bytes.size();
    if (k == KeyKind::ECC_PRIVATE || k == KeyKind::ECC_PUBLIC) {
      if (n != kEccKeyLen) raise(Err::KEY_LEN_ERROR, "curve key must be 32 bytes");
    } else if (n != 8 && n != 16 && n != 32) {
      raise(Err::KEY_LEN_ERROR, "symmetric key must be 8, 16 or 32 bytes");
    }
  }

  std::size_t size() const { return bytes.size(); }
  ByteView view() const { return bytes; }

  bool operator==(const KeyMaterial& o) const {
    return kind == o.kind && bytes == o.bytes;
  }
};

enum class MacVariant { CMAC_AES256, HASH_MAC_256 };

/// MAC selector. The block-cipher variant tops out at its 128-bit block;
/// longer digests need the hash-based variant.
struct MacAlgo {
  MacVariant variant = MacVariant::CMAC_AES256;
  int digest_len_bits = 128;

  MacAlgo() = default;
  MacAlgo(MacVariant v, int bits) : variant(v), digest_len_bits(bits) {
    if (bits != 64 && bits != 128 && bits != 256)
      raise(Err::ALGO_MISMATCH, "digest length must be 64, 128 or 256 bits");
    if (v == MacVariant::CMAC_AES256 && bits > 128)
      raise(Err::ALGO_MISMATCH, "CMAC_AES256 cannot emit more than 128 bits");
  }

  std::size_t digest_len_bytes() const {
    return static_cast<std::size_t>(digest_len_bits) / 8;
  }
};

struct Nonce {
  std::array<std::uint8_t, 16> bytes{};

  static Nonce generate(RandomSource& rng) {
    Nonce n;
    for (auto& b : n.bytes) b = rng.next_byte();
    return n;
  }

  ByteView view() const { return {bytes.data(), bytes.size()}; }
  bool operator==(const Nonce& o) const { return bytes == o.bytes; }
};

namespace detail {

struct PkeyDel { void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); } };
struct PkeyCtxDel { void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); } };
struct CipherCtxDel { void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); } };
struct MacDel { void operator()(EVP_MAC* p) const { EVP_MAC_free(p); } };
struct MacCtxDel { void operator()(EVP_MAC_CTX* p) const { EVP_MAC_CTX_free(p); } };

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDel>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDel>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDel>;
using MacCtxPtr = std::unique_ptr<EVP_MAC_CTX, MacCtxDel>;

inline EVP_MAC* fetch_mac(const char* name) {
  static std::unique_ptr<EVP_MAC, MacDel> cmac{EVP_MAC_fetch(nullptr, "CMAC", nullptr)};
  static std::unique_ptr<EVP_MAC, MacDel> hmac{EVP_MAC_fetch(nullptr, "HMAC", nullptr)};
  if (std::string_view(name) == "CMAC") return cmac.get();
  return hmac.get();
}

inline Bytes mac_raw(const char* mac_name, const char* algo_param_key,
                     const char* algo_param_val, ByteView key, ByteView msg) {
  EVP_MAC* mac = fetch_mac(mac_name);
  MacCtxPtr ctx(EVP_MAC_CTX_new(mac));
  if (!ctx) raise(Err::INTERNAL, "EVP_MAC_CTX_new failed");
  char algo_val[32];
  std::snprintf(algo_val, sizeof(algo_val), "%s", algo_param_val);
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(algo_param_key, algo_val, 0),
      OSSL_PARAM_construct_end(),
  };
  if (EVP_MAC_init(ctx.get(), key.data(), key.size(), params) != 1)
    raise(Err::INTERNAL, "EVP_MAC_init failed");
  if (!msg.empty() && EVP_MAC_update(ctx.get(), msg.data(), msg.size()) != 1)
    raise(Err::INTERNAL, "EVP_MAC_update failed");
  std::size_t out_len = 0;
  if (EVP_MAC_final(ctx.get(), nullptr, &out_len, 0) != 1)
    raise(Err::INTERNAL, "EVP_MAC_final (size) failed");
  Bytes out(out_len);
  if (EVP_MAC_final(ctx.get(), out.data(), &out_len, out.size()) != 1)
    raise(Err::INTERNAL, "EVP_MAC_final failed");
  out.resize(out_len);
  return out;
}

inline Bytes cipher_run(const EVP_CIPHER* cipher, bool encrypt, ByteView key,
                        const std::uint8_t* iv, ByteView input) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) raise(Err::INTERNAL, "EVP_CIPHER_CTX_new failed");
  if (EVP_CipherInit_ex(ctx.get(), cipher, nullptr, key.data(), iv,
                        encrypt ? 1 : 0) != 1)
    raise(Err::INTERNAL, "EVP_CipherInit_ex failed");
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  Bytes out(input.size() + kAesBlock);
  int n1 = 0, n2 = 0;
  if (!input.empty() &&
      EVP_CipherUpdate(ctx.get(), out.data(), &n1, input.data(),
                       static_cast<int>(input.size())) != 1)
    raise(Err::INTERNAL, "EVP_CipherUpdate failed");
  if (EVP_CipherFinal_ex(ctx.get(), out.data() + n1, &n2) != 1)
    raise(Err::DECRYPT_ERROR, "cipher finalization failed");
  out.resize(static_cast<std::size_t>(n1 + n2));
  return out;
}

}  // namespace detail

inline Bytes sha256(ByteView msg) {
  Bytes out(32);
  unsigned int len = 0;
  if (EVP_Digest(msg.data(), msg.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1)
    raise(Err::INTERNAL, "EVP_Digest failed");
  out.resize(len);
  return out;
}

/// Curve25519 keypair from the deterministic random source. The private key
/// is 32 raw bytes straight from the stream; clamping happens inside the
/// scalar multiplication, so identical seeds give identical keypairs.
inline std::pair<KeyMaterial, KeyMaterial> ecdh_keypair(RandomSource& rng) {
  Bytes priv = rng.bytes(kEccKeyLen);
  detail::PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr,
                                                    priv.data(), priv.size()));
  if (!pkey) raise(Err::INTERNAL, "X25519 private key import failed");
  Bytes pub(kEccKeyLen);
  std::size_t pub_len = pub.size();
  if (EVP_PKEY_get_raw_public_key(pkey.get(), pub.data(), &pub_len) != 1)
    raise(Err::INTERNAL, "X25519 public key derivation failed");
  pub.resize(pub_len);
  return {KeyMaterial(std::move(priv), KeyKind::ECC_PRIVATE),
          KeyMaterial(std::move(pub), KeyKind::ECC_PUBLIC)};
}

/// X25519 scalar multiplication. Rejects peer keys that collapse the shared
/// secret to all zeros (low-order points).
inline Bytes ecdh_shared(const KeyMaterial& priv, const KeyMaterial& peer_pub) {
  if (priv.size() != kEccKeyLen || peer_pub.size() != kEccKeyLen)
    raise(Err::KEY_LEN_ERROR, "ecdh_shared expects 32-byte keys");
  detail::PkeyPtr me(EVP_PKEY_new_raw_private_key(
      EVP_PKEY_X25519, nullptr, priv.bytes.data(), priv.bytes.size()));
  detail::PkeyPtr peer(EVP_PKEY_new_raw_public_key(
      EVP_PKEY_X25519, nullptr, peer_pub.bytes.data(), peer_pub.bytes.size()));
  if (!me || !peer) raise(Err::INVALID_PEER_KEY, "X25519 key import failed");
  detail::PkeyCtxPtr ctx(EVP_PKEY_CTX_new(me.get(), nullptr));
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
      EVP_PKEY_derive_set_peer(ctx.get(), peer.get()) != 1)
    raise(Err::INVALID_PEER_KEY, "X25519 derive setup failed");
  Bytes shared(kEccKeyLen);
  std::size_t len = shared.size();
  if (EVP_PKEY_derive(ctx.get(), shared.data(), &len) != 1)
    raise(Err::INVALID_PEER_KEY, "low-order peer public key");
  shared.resize(len);
  return shared;
}

/// AES-256-CBC over whole blocks, no padding. Exposed for the published
/// test vectors; the padded entry points below build on it.
inline Bytes aes_cbc_encrypt_blocks(const KeyMaterial& key, ByteView iv, ByteView pt) {
  if (key.size() != 32) raise(Err::KEY_LEN_ERROR, "AES-256 needs a 32-byte key");
  if (iv.size() != kAesBlock || pt.size() % kAesBlock != 0)
    raise(Err::INTERNAL, "aes_cbc_encrypt_blocks: bad iv or length");
  return detail::cipher_run(EVP_aes_256_cbc(), true, key.view(), iv.data(), pt);
}

inline Bytes aes_cbc_decrypt_blocks(const KeyMaterial& key, ByteView iv, ByteView ct) {
  if (key.size() != 32) raise(Err::KEY_LEN_ERROR, "AES-256 needs a 32-byte key");
  if (iv.size() != kAesBlock || ct.size() % kAesBlock != 0)
    raise(Err::DECRYPT_ERROR, "ciphertext not block-aligned");
  return detail::cipher_run(EVP_aes_256_cbc(), false, key.view(), iv.data(), ct);
}

/// Byte-count padding: N pad bytes, each holding the value N, 1 <= N <= 16.
/// Empty plaintext therefore grows to one full block.
inline Bytes aes_cbc_encrypt(const KeyMaterial& key, ByteView iv, ByteView plaintext) {
  Bytes padded(plaintext.begin(), plaintext.end());
  const std::size_t pad = kAesBlock - (plaintext.size() % kAesBlock);
  padded.insert(padded.end(), pad, static_cast<std::uint8_t>(pad));
  return aes_cbc_encrypt_blocks(key, iv, padded);
}

inline Bytes aes_cbc_decrypt(const KeyMaterial& key, ByteView iv, ByteView ciphertext) {
  if (ciphertext.empty() || ciphertext.size() % kAesBlock != 0)
    raise(Err::DECRYPT_ERROR, "ciphertext not block-aligned");
  Bytes padded = aes_cbc_decrypt_blocks(key, iv, ciphertext);
  const std::uint8_t pad = padded.back();
  if (pad == 0 || pad > kAesBlock || pad > padded.size())
    raise(Err::DECRYPT_ERROR, "invalid padding");
  for (std::size_t i = padded.size() - pad; i < padded.size(); ++i)
    if (padded[i] != pad) raise(Err::DECRYPT_ERROR, "invalid padding");
  padded.resize(padded.size() - pad);
  return padded;
}

/// Single-block AES-256 (ECB) used by the hardware-signature response.
inline Bytes aes_ecb_encrypt_block(const KeyMaterial& key, ByteView block) {
  if (key.size() != 32) raise(Err::KEY_LEN_ERROR, "AES-256 needs a 32-byte key");
  if (block.size() != kAesBlock) raise(Err::INTERNAL, "block must be 16 bytes");
  return detail::cipher_run(EVP_aes_256_ecb(), true, key.view(), nullptr, block);
}

/// MAC digest truncated to algo.digest_len_bits. CMAC_AES256 demands a
/// 32-byte key; the hash-based variant accepts any legal symmetric length.
inline Bytes mac(const MacAlgo& algo, const KeyMaterial& key, ByteView message) {
  Bytes full;
  if (algo.variant == MacVariant::CMAC_AES256) {
    if (algo.digest_len_bits > 128)
      raise(Err::ALGO_MISMATCH, "CMAC_AES256 cannot emit more than 128 bits");
    if (key.size() != 32)
      raise(Err::KEY_LEN_ERROR, "CMAC_AES256 needs a 32-byte key");
    full = detail::mac_raw("CMAC", OSSL_MAC_PARAM_CIPHER, "AES-256-CBC",
                           key.view(), message);
  } else {
    full = detail::mac_raw("HMAC", OSSL_MAC_PARAM_DIGEST, "SHA256", key.view(),
                           message);
  }
  full.resize(algo.digest_len_bytes());
  return full;
}

/// Extract-and-expand key derivation:
///   prk = HMAC-SHA256(key = label, msg = len32(in_0) || in_0 || ...)
///   out = first out_len bytes of T_1 || T_2 || ...,
///         T_i = HMAC-SHA256(key = prk, msg = label || i)
/// Inputs are length-prefixed, so both the list order and the boundaries
/// between inputs are significant.
inline KeyMaterial kdf(const std::vector<Bytes>& inputs, std::string_view label,
                       std::size_t out_len, KeyKind kind = KeyKind::SHARED_KEY) {
  if (out_len != 8 && out_len != 16 && out_len != 32)
    raise(Err::KEY_LEN_ERROR, "kdf output length must be 8, 16 or 32");
  bool any = false;
  Bytes msg;
  for (const auto& in : inputs) {
    any = any || !in.empty();
    put_u32_be(msg, static_cast<std::uint32_t>(in.size()));
    append(msg, in);
  }
  if (!any) raise(Err::INTERNAL, "kdf requires at least one non-empty input");
  const Bytes label_bytes = to_bytes(label);
  Bytes prk = detail::mac_raw("HMAC", OSSL_MAC_PARAM_DIGEST, "SHA256",
                              label_bytes, msg);
  Bytes out;
  for (std::uint8_t counter = 1; out.size() < out_len; ++counter) {
    Bytes block_msg = label_bytes;
    block_msg.push_back(counter);
    append(out, detail::mac_raw("HMAC", OSSL_MAC_PARAM_DIGEST, "SHA256", prk,
                                block_msg));
  }
  out.resize(out_len);
  return KeyMaterial(std::move(out), kind);
}

/// Deterministic widening of a short (8/16-byte) key to a 32-byte AES key.
/// Sub-domain and short-mode keys pass through here before any AES use.
inline KeyMaterial expand_to_aes_key(const KeyMaterial& key) {
  if (key.size() == 32) return key;
  return kdf({key.bytes}, "AESKEY", 32, key.kind);
}

}  // namespace simcan::crypto
