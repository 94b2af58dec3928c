#include "cxr/hash.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <openssl/evp.h>

#include "cxr/error.hpp"

namespace cxr {

namespace {

struct CtxFree {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

std::string finish_hex(EVP_MD_CTX* ctx) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    throw Error("sha256: digest finalization failed");
  }
  std::string hex(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(hex.data() + 2 * i, 3, "%02x", digest[i]);
  }
  return hex;
}

std::unique_ptr<EVP_MD_CTX, CtxFree> make_ctx() {
  std::unique_ptr<EVP_MD_CTX, CtxFree> ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: context initialization failed");
  }
  return ctx;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  auto ctx = make_ctx();
  if (EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1) {
    throw Error("sha256: update failed");
  }
  return finish_hex(ctx.get());
}

std::string sha256_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for hashing");
  auto ctx = make_ctx();
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    if (got > 0 &&
        EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(got)) != 1) {
      throw Error("sha256: update failed");
    }
  }
  return finish_hex(ctx.get());
}

}  // namespace cxr
