#include <catch_amalgamated.hpp>

#include <sitadda/checkpoint.hpp>
#include <sitadda/image_io.hpp>
#include <sitadda/perturbation.hpp>
#include <sitadda/synthetic.hpp>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace sitadda;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir()
{
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / ("sitadda_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        std::atexit([] { fs::remove_all(fs::temp_directory_path() / ("sitadda_cli_" + std::to_string(::getpid()))); });
        return d;
    }();
    return dir;
}

int run(const std::string& args)
{
    const std::string cmd = std::string("\"") + SITADDA_CLI_PATH + "\" " + args + " > \"" +
                            (workdir() / "last.log").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::size_t line_count(const fs::path& p)
{
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path write_config(const std::string& name, const std::string& text)
{
    const fs::path p = workdir() / name;
    std::ofstream(p) << text;
    return p;
}

/// Paired source images and unlabeled, overexposed target images.
void make_data(int pairs, int side)
{
    const fs::path src = workdir() / "source", tgt = workdir() / "target";
    if (fs::exists(src)) return;
    for (int i = 0; i < pairs; ++i) {
        SyntheticSceneSpec s;
        s.height = s.width = side;
        s.seed = static_cast<std::uint64_t>(100 + i);
        const auto p = generate_synthetic_pair(s);
        const std::string id = "img" + std::to_string(i);
        write_grayscale(src / (id + "_input.png"), p.input);
        write_grayscale(src / (id + "_target.png"), p.target);
        write_grayscale(tgt / (id + ".tif"), overexpose(p.input, 1.7));
    }
}

const char* kTinyConfig = R"(seed = 9
[data]
image_size = 32
[paths]
source = "{src}"
target = "{tgt}"
[model]
depth = 3
base_channels = 4
[source]
epochs = 2
batch_size = 4
[adapt]
schedule = "prefix:2"
steps = 3
batch_size = 2
disc_layers = 2
disc_base_channels = 4
)";

fs::path tiny_config()
{
    make_data(10, 32);
    std::string text = kTinyConfig;
    text.replace(text.find("{src}"), 5, (workdir() / "source").string());
    text.replace(text.find("{tgt}"), 5, (workdir() / "target").string());
    return write_config("tiny.toml", text);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

} // namespace

TEST_CASE("cli rejects bad invocations with the config exit code")
{
    CHECK(run("") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run("train-source --bogus-flag") == 2);
    CHECK(run("train-source --config " + q(workdir() / "missing.toml")) == 2);
    CHECK(run("train-source --config " + q(write_config("broken.toml", "seed = [1,\n"))) == 2);
    // No seed anywhere.
    CHECK(run("train-source --config " + q(write_config("noseed.toml", "[model]\ndepth = 3\n"))) == 2);
    CHECK(run("train-source --seed 1 --set paths.source=" + q(workdir() / "nowhere")) == 2);
    CHECK(run("perturb --seed 1 --set perturb.kind=blur --set paths.input=" + q(workdir())) == 2);
}

TEST_CASE("cli reports unreadable data with the data exit code")
{
    const fs::path bad = workdir() / "bad_source";
    fs::create_directories(bad);
    std::ofstream(bad / "a_input.png") << "garbage";
    std::ofstream(bad / "a_target.png") << "garbage";
    CHECK(run("train-source --seed 1 --set paths.source=" + q(bad)) == 3);
    const fs::path fake_ckpt = workdir() / "fake.ckpt";
    std::ofstream(fake_ckpt) << "not a checkpoint";
    make_data(10, 32);
    CHECK(run("evaluate --seed 1 --set paths.checkpoint=" + q(fake_ckpt) + " --set paths.source=" + q(workdir() / "source")) == 3);
}

TEST_CASE("train-source, adapt and evaluate round trip")
{
    const fs::path cfg = tiny_config();
    const fs::path out = workdir() / "train";
    REQUIRE(run("train-source --config " + q(cfg) + " --out " + q(out)) == 0);
    REQUIRE(fs::exists(out / "source.ckpt"));
    const auto manifest = read_json(out / "train_source.json");
    CHECK(manifest["schema_version"] == 1);
    CHECK(manifest["seed"] == 9);
    CHECK(manifest["epochs"].size() == 2);
    CHECK(manifest["split"][0] == 7);
    CHECK(load_checkpoint(out / "source.ckpt").stage == ModelStage::Source);

    const fs::path adapted = workdir() / "adapt";
    REQUIRE(run("adapt --config " + q(cfg) + " --out " + q(adapted) + " --set paths.checkpoint=" + q(out / "source.ckpt")) == 0);
    const auto am = read_json(adapted / "adapt.json");
    CHECK(am["steps"].size() == 3);
    CHECK(load_checkpoint(adapted / "adapted.ckpt").stage == ModelStage::Adapted);
    CHECK(checksum_hex(parameter_checksum(load_checkpoint(out / "source.ckpt").model)) ==
          manifest["checksums"]["model"].get<std::string>());

    const fs::path ev = workdir() / "eval";
    REQUIRE(run("evaluate --config " + q(cfg) + " --out " + q(ev) + " --set paths.checkpoint=" + q(adapted / "adapted.ckpt")) == 0);
    CHECK(line_count(ev / "per_image.csv") == 11);
    CHECK(fs::exists(ev / "per_image.svg"));
    CHECK(read_json(ev / "aggregate.json")["count"] == 10);
}

TEST_CASE("evaluate on identical images")
{
    make_data(10, 32);
    const fs::path src = workdir() / "source", out = workdir() / "eval_same";
    REQUIRE(run("evaluate --seed 2 --out " + q(out) + " --set paths.predictions=" + q(src) + " --set paths.truth=" + q(src)) == 0);
    const auto agg = read_json(out / "aggregate.json")["aggregate"];
    CHECK(agg["pearson"]["mean"].get<double>() == Catch::Approx(1.0).margin(1e-12));
    CHECK(agg["psnr"]["mean"] == "inf");
    CHECK(agg["ssim"]["mean"].get<double>() == Catch::Approx(1.0).margin(1e-9));
    CHECK(slurp(out / "per_image.csv").rfind("id,pearson,psnr,ssim,entropy\n", 0) == 0);
}

TEST_CASE("perturb writes 8-bit images with the documented pixels")
{
    make_data(10, 32);
    const fs::path out = workdir() / "perturbed";
    REQUIRE(run("perturb --seed 3 --out " + q(out) + " --set paths.input=" + q(workdir() / "source") +
                " --set perturb.kind=overexpose --set perturb.magnitude=1.5") == 0);
    const Image in = read_grayscale(workdir() / "source" / "img0_input.png");
    CHECK(read_grayscale(out / "img0_input.png") == overexpose(in, 1.5));
    CHECK(read_grayscale(out / "img0_target.png") == read_grayscale(workdir() / "source" / "img0_target.png"));
    CHECK(read_json(out / "perturb.json")["files"].size() == 20);

    const fs::path zoomed = workdir() / "zoomed";
    REQUIRE(run("perturb --seed 3 --out " + q(zoomed) + " --set paths.input=" + q(workdir() / "source") +
                " --set perturb.kind=scale --set perturb.magnitude=1.2") == 0);
    const Image t = read_grayscale(workdir() / "source" / "img0_target.png");
    CHECK(read_grayscale(zoomed / "img0_target.png") == scale_zoom(t, 1.2));
}

TEST_CASE("sweep over the full 4 x 16 grid")
{
    make_data(10, 32);
    GeneratorModel g = build_generator(8, 2, nn::NormKind::Instance, 4);
    g.initialize(5);
    const fs::path ckpt = workdir() / "deep.ckpt";
    save_checkpoint(ckpt, g, ModelStage::Source);
    const fs::path out = workdir() / "sweep";
    const std::string args = "sweep --seed 4 --out " + q(out) + " --set paths.checkpoint=" + q(ckpt) +
                             " --set paths.source=" + q(workdir() / "source") + " --set paths.target=" +
                             q(workdir() / "target") + " --set data.image_size=256 --set adapt.steps=1" +
                             " --set adapt.batch_size=1 --set adapt.disc_layers=1 --set adapt.disc_base_channels=2";
    REQUIRE(run(args) == 0);
    CHECK(line_count(out / "sweep.csv") == 65);
    const auto m = read_json(out / "sweep.json");
    REQUIRE(m["cells"].size() == 64);
    CHECK(m["cells"][0]["candidate"] == "prefix:1@0.001");
    CHECK(m["cells"][63]["candidate"] == "prefix:16@1e-06");
    CHECK(checksum_hex(parameter_checksum(load_checkpoint(ckpt).model)) == checksum_hex(parameter_checksum(g)));
}

TEST_CASE("autoselect ranks candidates and reports exclusion")
{
    const fs::path cfg = tiny_config();
    std::vector<fs::path> ckpts;
    for (int k = 0; k < 2; ++k) {
        const fs::path out = workdir() / ("member" + std::to_string(k));
        REQUIRE(run("train-source --config " + q(cfg) + " --out " + q(out) + " --seed " + std::to_string(20 + k)) == 0);
        ckpts.push_back(out / "source.ckpt");
    }
    const std::string list = "[\"" + ckpts[0].string() + "\",\"" + ckpts[1].string() + "\"]";
    const fs::path out = workdir() / "auto";
    REQUIRE(run("autoselect --config " + q(cfg) + " --out " + q(out) + " --set 'paths.checkpoints=" + list +
                "' --set 'sweep.lrs=[1e-3,1e-4]' --set 'sweep.schedules=[\"prefix:1\",\"prefix:3\"]'" +
                " --set ensemble.min_val_pearson=-1") == 0);
    const std::string csv = slurp(out / "ranking.csv");
    CHECK(csv.rfind("candidate,score,status,trainable_params\n", 0) == 0);
    CHECK(line_count(out / "ranking.csv") == 5);
    const auto m = read_json(out / "autoselect.json");
    CHECK(m.contains("chosen"));

    // A threshold nobody meets leaves fewer than two members.
    CHECK(run("autoselect --config " + q(cfg) + " --out " + q(workdir() / "auto_x") + " --set 'paths.checkpoints=" + list +
              "' --set ensemble.min_val_pearson=2") == 4);
}

TEST_CASE("synthbench writes its reports")
{
    const fs::path cfg = write_config("bench.toml", R"(seed = 1
[synthbench]
num_pairs = 9
image_size = 32
lrs = [1e-3]
schedules = ["prefix:1", "prefix:2"]
[synthbench.model]
depth = 3
base_channels = 4
[synthbench.source]
epochs = 1
[synthbench.adapt]
steps = 2
batch_size = 2
disc_layers = 2
disc_base_channels = 4
[synthbench.ensemble]
k = 2
min_val_pearson = -1
)");
    const fs::path out = workdir() / "bench";
    REQUIRE(run("synthbench --config " + q(cfg) + " --out " + q(out)) == 0);
    const auto s = read_json(out / "summary.json");
    CHECK(s["schema_version"] == 1);
    CHECK(s["candidates"].size() == 2);
    CHECK(s["ranking"].size() == 2);
    CHECK(fs::exists(out / "curve.svg"));
    CHECK(line_count(out / "ranking.csv") == 3);
}

TEST_CASE("synthbench rejects schedules that do not fit the model before training")
{
    CHECK(run("synthbench --seed 1 --out " + q(workdir() / "bench_bad") +
              " --set synthbench.image_size=32 --set synthbench.model.depth=3") == 2);
    CHECK_FALSE(fs::exists(workdir() / "bench_bad" / "summary.json"));
    CHECK(slurp(workdir() / "last.log").find("source member") == std::string::npos);
}
