#include <doctest.h>

#include <cstdio>

#include "rinkkp/serialize.hpp"
#include "rinkkp/image.hpp"
#include "test_support.hpp"

using namespace rinkkp;

TEST_SUITE("tensor_serialize") {

TEST_CASE("tensor construction enforces dims/data consistency") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.data == std::vector<double>(6, 0.0));

    CHECK_THROWS(Tensor(std::vector<int>{}));
    CHECK_THROWS(Tensor({2, 0, 3}));
    CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));

    Tensor f = Tensor::full({2, 2}, 7.5);
    CHECK(f.data == std::vector<double>(4, 7.5));
}

TEST_CASE("offset4 walks row-major [B,C,H,W]") {
    Tensor t({2, 3, 4, 5});
    CHECK(t.offset4(0, 0, 0, 0) == 0);
    CHECK(t.offset4(0, 0, 0, 1) == 1);
    CHECK(t.offset4(0, 0, 1, 0) == 5);
    CHECK(t.offset4(0, 1, 0, 0) == 20);
    CHECK(t.offset4(1, 0, 0, 0) == 60);
    CHECK(t.offset4(1, 2, 3, 4) == 2 * 60 - 1);
}

TEST_CASE("ensure_finite rejects NaN and Inf") {
    Tensor t({2, 2});
    ensure_finite(t, "test");
    t.data[1] = std::nan("");
    CHECK_THROWS(ensure_finite(t, "test"));
    t.data[1] = INFINITY;
    CHECK_THROWS(ensure_finite(t, "test"));
}

TEST_CASE("ParamTensor grad matches value dims and zeroes") {
    ParamTensor p(Tensor::full({2, 3}, 1.0));
    CHECK(p.grad.dims == p.value.dims);
    for (double v : p.grad.data) CHECK(v == 0.0);
    p.grad.data[0] = 5.0;
    p.zero_grad();
    CHECK(p.grad.data[0] == 0.0);
}

TEST_CASE("PTSR1 round-trips bit-exactly and has the documented layout") {
    const auto dir = testsup::fresh_dir("ptsr");
    testsup::Rng rng(7);
    Tensor t = testsup::random_tensor({2, 3, 4}, rng, -100.0, 100.0);
    t.data[0] = 0.1;  // not exactly representable; survives only if bytes are exact
    write_ptsr(dir / "t.ptsr", t);

    const auto bytes = testsup::read_bytes(dir / "t.ptsr");
    REQUIRE(bytes.size() == 6 + 4 + 3 * 4 + 24 * 8);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[4] == '1');
    CHECK(bytes[5] == '\0');
    CHECK(bytes[6] == 3);   // ndim, little-endian u32
    CHECK(bytes[7] == 0);
    CHECK(bytes[10] == 2);  // first extent
    CHECK(bytes[14] == 3);
    CHECK(bytes[18] == 4);

    const Tensor back = read_ptsr(dir / "t.ptsr");
    CHECK(back.dims == t.dims);
    CHECK(testsup::bit_equal(back, t));
}

TEST_CASE("PTSR1 reader rejects corrupt files") {
    const auto dir = testsup::fresh_dir("ptsr_bad");
    {
        std::ofstream out(dir / "bad_magic.ptsr", std::ios::binary);
        out << "NOTPTSR___________";
    }
    CHECK_THROWS(read_ptsr(dir / "bad_magic.ptsr"));

    Tensor t = Tensor::full({4}, 1.0);
    write_ptsr(dir / "trunc.ptsr", t);
    auto bytes = testsup::read_bytes(dir / "trunc.ptsr");
    bytes.resize(bytes.size() - 5);
    {
        std::ofstream out(dir / "trunc.ptsr", std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS(read_ptsr(dir / "trunc.ptsr"));
    CHECK_THROWS(read_ptsr(dir / "missing.ptsr"));
}

TEST_CASE("checkpoint save/load round-trips tensors and metadata") {
    const auto dir = testsup::fresh_dir("ckpt");
    testsup::Rng rng(3);
    Checkpoint ckpt;
    ckpt.tensors.emplace("param/a.kernel", testsup::random_tensor({2, 2, 3, 3}, rng));
    ckpt.tensors.emplace("buffer/a.running_mean", testsup::random_tensor({2}, rng));
    ckpt.meta["model_config"] = {{"input_h", 64}};
    save_checkpoint(dir, ckpt);

    const Checkpoint back = load_checkpoint(dir);
    REQUIRE(back.tensors.size() == 2);
    CHECK(testsup::bit_equal(back.tensors.at("param/a.kernel"), ckpt.tensors.at("param/a.kernel")));
    CHECK(testsup::bit_equal(back.tensors.at("buffer/a.running_mean"),
                             ckpt.tensors.at("buffer/a.running_mean")));
    CHECK(back.meta.at("model_config").at("input_h") == 64);
}

TEST_CASE("PPM round-trip and tensor conversion") {
    const auto dir = testsup::fresh_dir("ppm");
    Image img(4, 6);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) {
            img.px(y, x)[0] = static_cast<std::uint8_t>(40 * y + x);
            img.px(y, x)[1] = 255;
            img.px(y, x)[2] = 0;
        }
    }
    write_ppm(dir / "img.ppm", img);
    const Image back = read_ppm(dir / "img.ppm");
    CHECK(back.h == 4);
    CHECK(back.w == 6);
    CHECK(back.rgb == img.rgb);

    const Tensor t = image_to_tensor(back);
    CHECK(t.dims == std::vector<int>{1, 3, 4, 6});
    CHECK(t.at4(0, 1, 0, 0) == doctest::Approx(1.0));
    CHECK(t.at4(0, 2, 0, 0) == 0.0);
    CHECK(t.at4(0, 0, 1, 2) == doctest::Approx(42.0 / 255.0));
}

TEST_CASE("stack_batch concatenates samples in order") {
    Tensor a = Tensor::full({1, 2, 2, 2}, 1.0);
    Tensor b = Tensor::full({1, 2, 2, 2}, 2.0);
    const Tensor s = stack_batch({&a, &b});
    CHECK(s.dims == std::vector<int>{2, 2, 2, 2});
    CHECK(s.at4(0, 0, 0, 0) == 1.0);
    CHECK(s.at4(1, 1, 1, 1) == 2.0);

    Tensor wrong = Tensor::full({1, 3, 2, 2}, 0.0);
    CHECK_THROWS(stack_batch({&a, &wrong}));
}

}  // TEST_SUITE
