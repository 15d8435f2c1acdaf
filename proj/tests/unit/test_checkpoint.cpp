#include "doctest.h"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "stms/checkpoint.hpp"

using namespace stms;

namespace {

std::string tmp_path(const std::string& stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
            return false;
    return true;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    const std::string path = tmp_path("stms_ckpt_roundtrip.bin");
    Checkpoint ck;
    ck.config["name"] = "toy";
    ck.config["d_state"] = "16";
    ck.config["note"] = "value with spaces and = sign inside";
    ck.tensors.emplace_back(
        "w", Tensor::from_vector({2, 3}, {1.0 / 3.0, -0.0, 1e-300, 3.141592653589793,
                                          -2.5, 1e308}));
    ck.tensors.emplace_back("b", Tensor::from_vector({1}, {0.1}));
    ck.tensors.emplace_back("s", Tensor::scalar(42.0));

    save_checkpoint(path, ck);
    const Checkpoint got = load_checkpoint(path);

    CHECK(got.config.size() == 3);
    CHECK(got.config.at("name") == "toy");
    CHECK(got.config.at("d_state") == "16");
    CHECK(got.config.at("note") == "value with spaces and = sign inside");
    REQUIRE(got.tensors.size() == 3);
    CHECK(got.tensors[0].first == "w");
    CHECK(bit_equal(got.tensors[0].second, ck.tensors[0].second));
    CHECK(bit_equal(got.tensors[1].second, ck.tensors[1].second));
    CHECK(bit_equal(got.tensors[2].second, ck.tensors[2].second));
    CHECK(got.find("b") != nullptr);
    CHECK(got.find("nope") == nullptr);

    // saving the loaded copy reproduces the identical file
    const std::string path2 = tmp_path("stms_ckpt_roundtrip2.bin");
    save_checkpoint(path2, got);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string c1((std::istreambuf_iterator<char>(f1)), {});
    const std::string c2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(c1 == c2);
    CHECK(c1.size() > 0);
    CHECK(c1.substr(0, 8) == "STMSCKPT");

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("checkpoint rejects missing and corrupt files") {
    CHECK_THROWS_AS(load_checkpoint(tmp_path("stms_ckpt_does_not_exist.bin")),
                    std::runtime_error);

    const std::string bad = tmp_path("stms_ckpt_bad_magic.bin");
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOTMAGIC and then some";
    }
    CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);

    // truncate a valid file mid-tensor
    const std::string trunc = tmp_path("stms_ckpt_trunc.bin");
    Checkpoint ck;
    ck.tensors.emplace_back("w", Tensor::full({8, 8}, 1.5));
    save_checkpoint(trunc, ck);
    const auto full_size = std::filesystem::file_size(trunc);
    std::filesystem::resize_file(trunc, full_size - 13);
    CHECK_THROWS_AS(load_checkpoint(trunc), std::runtime_error);

    // config keys may not contain '='
    Checkpoint evil;
    evil.config["a=b"] = "c";
    CHECK_THROWS_AS(save_checkpoint(tmp_path("stms_ckpt_evil.bin"), evil),
                    std::invalid_argument);

    std::filesystem::remove(bad);
    std::filesystem::remove(trunc);
}
