#include "xgs/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "xgs/error.hpp"
#include "xgs/io.hpp"

namespace xgs {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw InvalidState("sha256: digest init failed");
        }
    }
    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
    template <class T>
    void update_values(const T* data, std::size_t count) {
        update(data, count * sizeof(T));
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }

private:
    struct Free {
        void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
    };
    std::unique_ptr<EVP_MD_CTX, Free> ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_hex(std::string_view text) {
    Sha256 h;
    h.update(text.data(), text.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

std::string geometry_checksum(const GaussianField& field) {
    Sha256 h;
    for (const Gaussian& g : field.gaussians()) {
        h.update_values(g.mu.data(), 3);
        h.update_values(g.rotation.coeffs().data(), 4);
        h.update_values(g.scale.data(), 3);
        h.update_values(&g.opacity, 1);
        h.update_values(g.color.data(), 3);
    }
    return h.hex();
}

std::string semantic_checksum(const GaussianField& field, const Codebook& codebook) {
    Sha256 h;
    for (const Gaussian& g : field.gaussians()) h.update_values(g.logits.data(), g.logits.size());
    h.update_values(codebook.E.data(), codebook.E.size());
    h.update_values(codebook.N.data(), codebook.N.size());
    h.update_values(codebook.M.data(), codebook.M.size());
    return h.hex();
}

}  // namespace xgs
