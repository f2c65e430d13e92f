#include "couplegen/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "couplegen/image_io.hpp"
#include "couplegen/isotonic.hpp"
#include "couplegen/pipeline.hpp"
#include "couplegen/prompt_io.hpp"
#include "couplegen/schedule.hpp"
#include "couplegen/tensor_io.hpp"

namespace couplegen::cli {

namespace {

namespace fs = std::filesystem;

/// Reported as exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineFlags {
    PipelineConfig config;
    bool distinct_noise = false;

    void add_to(CLI::App& cmd, bool with_steps)
    {
        cmd.add_option("--weight-seed", config.weight_seed, "Seed for block weights")
            ->capture_default_str();
        cmd.add_option("--noise-seed", config.noise_seed, "Seed for initial noise")
            ->capture_default_str();
        cmd.add_flag("--distinct-noise", distinct_noise, "Give every entity its own noise");
        cmd.add_option("--d-model", config.d_model)->capture_default_str();
        cmd.add_option("--text-tokens", config.text_tokens)->capture_default_str();
        cmd.add_option("--side", config.side, "Image side in pixels")->capture_default_str();
        cmd.add_option("--double-blocks", config.double_blocks)->capture_default_str();
        cmd.add_option("--single-blocks", config.single_blocks)->capture_default_str();
        if (with_steps) {
            cmd.add_option("--steps", config.steps, "Sampling steps")->capture_default_str();
        }
    }

    PipelineConfig resolved() const
    {
        PipelineConfig c = config;
        c.shared_noise = !distinct_noise;
        return c;
    }
};

struct MetricFlags {
    Lambdas lambdas;
    std::uint64_t scorer_seed = StubScorerConfig{}.text_seed;

    void add_to(CLI::App& cmd)
    {
        cmd.add_option("--lambda-bg", lambdas.lambda_bg)->capture_default_str();
        cmd.add_option("--lambda-ti", lambdas.lambda_ti)->capture_default_str();
        cmd.add_option("--scorer-seed", scorer_seed, "Seed of the stub alignment scorer")
            ->capture_default_str();
    }

    StubScorerConfig scorer_config() const
    {
        StubScorerConfig c;
        c.text_seed = scorer_seed;
        c.image_seed = mix64(scorer_seed);
        return c;
    }
};

void write_text(const std::string& path, const std::string& text, std::ostream& out)
{
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write " + path);
    }
    os << text;
}

std::vector<MaskGrid> load_masks(const std::vector<std::string>& paths)
{
    std::vector<MaskGrid> masks;
    for (const auto& p : paths) {
        masks.push_back(read_mask(p));
    }
    return masks;
}

std::optional<std::vector<MaskGrid>> optional_masks(const std::vector<std::string>& paths,
                                                    std::size_t expected)
{
    if (paths.empty()) {
        return std::nullopt;
    }
    if (paths.size() != expected) {
        throw UsageError("expected " + std::to_string(expected) + " masks, got " +
                         std::to_string(paths.size()));
    }
    return load_masks(paths);
}

std::vector<double> parse_number_list(const std::string& list)
{
    std::vector<double> out;
    if (const auto dots = list.find(".."); dots != std::string::npos) {
        double first = 0.0, last = 0.0;
        try {
            first = std::stod(list.substr(0, dots));
            last = std::stod(list.substr(dots + 2));
        } catch (const std::logic_error&) {
            throw UsageError("malformed range '" + list + "' (expected a..b)");
        }
        if (last < first) {
            throw UsageError("range '" + list + "' is empty");
        }
        for (double v = first; v <= last + 1e-9; v += 1.0) {
            out.push_back(v);
        }
        return out;
    }
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::logic_error&) {
            throw UsageError("malformed number '" + item + "' in '" + list + "'");
        }
    }
    if (out.empty()) {
        throw UsageError("empty number list");
    }
    return out;
}

std::string format_entity_file(const char* stem, std::size_t index, const char* ext)
{
    return std::string(stem) + "_" + std::to_string(index + 1) + ext;
}

// --- subcommands -----------------------------------------------------------

struct DecomposeArgs {
    std::string prompts;
    std::string fixture;
    std::string out;
};

int do_decompose(const DecomposeArgs& a, std::ostream& out)
{
    const auto prompts = read_prompt_lines(a.prompts);
    DecompositionSource source = a.fixture.empty() ? DecompositionSource{LlmEndpoint::from_env()}
                                                   : DecompositionSource{FixturePath{a.fixture}};
    const PromptBundle bundle = decompose(prompts, source);
    write_text(a.out, bundle.to_json().dump(2) + "\n", out);
    return kExitOk;
}

struct ScheduleArgs {
    std::string family;
    double center = 0.0;
    double scale = 1.0;
    std::size_t steps = 50;
    std::string out;
};

int do_schedule(const ScheduleArgs& a, std::ostream& out)
{
    const ScheduleFamily fam{parse_family_kind(a.family), a.center, a.scale};
    write_text(a.out, schedule_csv(make_schedule(fam, a.steps)), out);
    return kExitOk;
}

struct GenerateArgs {
    PipelineFlags pipeline;
    MetricFlags metric;
    std::string bundle;
    std::string schedule;
    std::vector<std::string> masks;
    std::string out_dir;
    bool latents = false;
};

int do_generate(const GenerateArgs& a)
{
    const PromptBundle bundle = read_bundle(a.bundle);
    const ThetaSchedule schedule = read_schedule_csv(a.schedule);
    PipelineConfig cfg = a.pipeline.resolved();
    cfg.steps = schedule.size();
    const Pipeline pipeline = init_pipeline(cfg);
    const auto scorer = make_stub_scorer(bundle, a.metric.scorer_config());
    const auto masks = optional_masks(a.masks, bundle.entities.size());

    const Generation g =
        generate(pipeline, bundle, schedule, cfg.noise_seed, masks, scorer, a.metric.lambdas);

    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < g.images.size(); ++i) {
        write_image(dir / format_entity_file("image", i, ".pgm"), g.images[i]);
        write_mask(dir / format_entity_file("mask", i, ".pgm"), g.masks[i]);
    }
    std::ofstream(dir / "report.json") << g.report.to_json().dump(2) << '\n';

    if (a.latents) {
        SampleOptions opts;
        opts.record_latents = true;
        const SampleResult r = sample(pipeline, bundle, schedule, cfg.noise_seed, opts);
        fs::create_directories(dir / "latents");
        for (std::size_t e = 0; e < r.latents.size(); ++e) {
            for (std::size_t s = 0; s < r.latents[e].size(); ++s) {
                write_f32t(dir / "latents" /
                               ("entity_" + std::to_string(e + 1) + "_step_" +
                                std::to_string(s + 1) + ".f32t"),
                           to_tensor(r.latents[e][s]));
            }
        }
    }
    return kExitOk;
}

struct EvaluateArgs {
    MetricFlags metric;
    std::vector<std::string> images;
    std::vector<std::string> masks;
    std::string bundle;
    std::string out;
};

int do_evaluate(const EvaluateArgs& a, std::ostream& out)
{
    if (a.images.size() != a.masks.size()) {
        throw UsageError("evaluate needs one mask per image");
    }
    std::vector<ImageGrid> images;
    for (const auto& p : a.images) {
        images.push_back(read_image(p));
    }
    const auto masks = load_masks(a.masks);

    std::vector<std::string> keys;
    StubAlignmentScorer scorer(a.metric.scorer_config());
    if (!a.bundle.empty()) {
        const PromptBundle bundle = read_bundle(a.bundle);
        if (bundle.entities.size() != images.size()) {
            throw UsageError("bundle has " + std::to_string(bundle.entities.size()) +
                             " entities for " + std::to_string(images.size()) + " images");
        }
        scorer = make_stub_scorer(bundle, a.metric.scorer_config());
        keys = bundle.entities;
    }
    const MetricReport report = score_images(images, masks, keys, scorer, a.metric.lambdas);
    write_text(a.out, report.to_json().dump(2) + "\n", out);
    return kExitOk;
}

struct OptimizeArgs {
    PipelineFlags pipeline;
    MetricFlags metric;
    std::string bundle;
    std::vector<std::string> masks;
    std::size_t max_evals = 200;
    double step_size = 0.1;
    std::string init_family = "arctan";
    std::optional<double> init_center;
    double init_scale = 0.5;
    std::string out;
    std::string trace_dir;
};

int do_optimize(const OptimizeArgs& a, std::ostream& out, std::ostream& err)
{
    const PromptBundle bundle = read_bundle(a.bundle);
    const PipelineConfig cfg = a.pipeline.resolved();
    const Pipeline pipeline = init_pipeline(cfg);
    const auto scorer = make_stub_scorer(bundle, a.metric.scorer_config());
    const auto masks = optional_masks(a.masks, bundle.entities.size());

    SearchConfig search;
    search.max_evals = a.max_evals;
    search.step_size = a.step_size;
    search.init = make_schedule({parse_family_kind(a.init_family),
                                 a.init_center.value_or(static_cast<double>(cfg.steps) / 5.0),
                                 a.init_scale},
                                cfg.steps);

    const Objective objective([&](const ThetaSchedule& s) {
        return generate_and_score(pipeline, bundle, s, cfg.noise_seed, masks, scorer,
                                  a.metric.lambdas)
            .f_c;
    });

    SearchResult result;
    try {
        result = coordinate_search(search, objective);
    } catch (const SearchAborted& e) {
        if (!a.trace_dir.empty()) {
            write_trace(a.trace_dir, e.trace);
        }
        throw;
    }
    if (!a.trace_dir.empty()) {
        write_trace(a.trace_dir, result.trace);
    }
    write_text(a.out, schedule_csv(result.schedule), out);
    err << "best f_c " << result.value << " after " << objective.evaluations()
        << " evaluations\n";
    return kExitOk;
}

struct SweepArgs {
    PipelineFlags pipeline;
    MetricFlags metric;
    std::string bundle;
    std::vector<std::string> families{"step01"};
    std::string centers;
    std::string scales = "0.5,0.8";
    std::size_t num_seeds = 1;
    std::vector<std::string> masks;
    std::string out;
};

int do_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err)
{
    const PromptBundle bundle = read_bundle(a.bundle);
    const PipelineConfig base = a.pipeline.resolved();
    const auto scorer = make_stub_scorer(bundle, a.metric.scorer_config());
    const auto masks = optional_masks(a.masks, bundle.entities.size());
    if (a.num_seeds == 0) {
        throw UsageError("--num-seeds must be >= 1");
    }

    const auto centers = parse_number_list(a.centers);
    const auto scales = parse_number_list(a.scales);
    std::vector<ScheduleFamily> grid;
    for (const auto& name : a.families) {
        auto part = family_grid(parse_family_kind(name), centers, scales);
        grid.insert(grid.end(), part.begin(), part.end());
    }

    // Seed k uses weight_seed + k and noise_seed + k.
    std::vector<Pipeline> pipelines;
    for (std::size_t k = 0; k < a.num_seeds; ++k) {
        PipelineConfig c = base;
        c.weight_seed += k;
        c.noise_seed += k;
        pipelines.push_back(init_pipeline(c));
    }

    struct Row {
        double f_bg = 0, f_ti = 0, r = 0, f_c = 0;
    };
    std::vector<Row> rows(grid.size());
    std::vector<std::exception_ptr> failures(grid.size());
    const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            const ThetaSchedule s = make_schedule(grid[idx], base.steps);
            Row acc;
            for (const Pipeline& p : pipelines) {
                const MetricReport rep = generate_and_score(p, bundle, s, p.config().noise_seed,
                                                            masks, scorer, a.metric.lambdas);
                acc.f_bg += rep.f_bg;
                acc.f_ti += std::accumulate(rep.f_ti.begin(), rep.f_ti.end(), 0.0) /
                            static_cast<double>(rep.f_ti.size());
                acc.r += rep.validity_ratio;
                acc.f_c += rep.f_c;
            }
            const double k = static_cast<double>(pipelines.size());
            rows[idx] = {acc.f_bg / k, acc.f_ti / k, acc.r / k, acc.f_c / k};
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const std::exception& e) {
                throw GridPointError(i, grid[i], e.what());
            }
        }
    }

    std::ostringstream table;
    table.precision(17);
    table << "family,center,scale,f_bg,f_ti_mean,validity_ratio,f_c\n";
    std::vector<double> values;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& f = grid[i];
        table << to_string(f.kind) << ',' << f.center << ',' << f.scale << ',' << rows[i].f_bg
              << ',' << rows[i].f_ti << ',' << rows[i].r << ',' << rows[i].f_c << '\n';
        values.push_back(rows[i].f_c);
    }
    write_text(a.out, table.str(), out);
    const std::size_t best = select_best(grid, values);
    err << "best " << grid[best].describe() << " f_c " << values[best] << '\n';
    return kExitOk;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Coupled image generation toolkit: prompt decomposition, theta schedules, "
                 "toy generation, evaluation and schedule optimization"};
    app.require_subcommand(1, 1);
    const CLI::IsMember kFamilyNames({"step01", "01", "arctan", "sin"});

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Split prompts into a background/entity bundle");
    c_dec->add_option("--prompts", dec.prompts, "Text file, one prompt per line")
        ->required()
        ->check(CLI::ExistingFile);
    c_dec->add_option("--fixture", dec.fixture, "Read the LLM reply from this file")
        ->check(CLI::ExistingFile);
    c_dec->add_option("--out", dec.out, "Bundle JSON path (default stdout)");

    ScheduleArgs sch;
    auto* c_sch = app.add_subcommand("schedule", "Write a parametric theta schedule as CSV");
    c_sch->add_option("--family", sch.family, "step01 | arctan | sin")->required()->check(kFamilyNames);
    c_sch->add_option("--center", sch.center)->required();
    c_sch->add_option("--scale", sch.scale)->capture_default_str();
    c_sch->add_option("--steps", sch.steps)->required();
    c_sch->add_option("--out", sch.out, "CSV path (default stdout)");

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Run the toy coupled generator");
    gen.pipeline.add_to(*c_gen, false);
    gen.metric.add_to(*c_gen);
    c_gen->add_option("--bundle", gen.bundle)->required()->check(CLI::ExistingFile);
    c_gen->add_option("--schedule", gen.schedule, "Schedule CSV; its length sets the step count")
        ->required()
        ->check(CLI::ExistingFile);
    c_gen->add_option("--masks", gen.masks, "Entity masks (default: auto threshold)")
        ->check(CLI::ExistingFile);
    c_gen->add_option("--out-dir", gen.out_dir)->required();
    c_gen->add_flag("--latents", gen.latents, "Also write per-step latents as .f32t");

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Score images against entity masks");
    ev.metric.add_to(*c_ev);
    c_ev->add_option("--images", ev.images)->required()->check(CLI::ExistingFile);
    c_ev->add_option("--masks", ev.masks)->required()->check(CLI::ExistingFile);
    c_ev->add_option("--bundle", ev.bundle, "Bundle for alignment scoring")
        ->check(CLI::ExistingFile);
    c_ev->add_option("--out", ev.out, "Report JSON path (default stdout)");

    OptimizeArgs opt;
    auto* c_opt = app.add_subcommand("optimize", "Search a monotone schedule maximizing f_c");
    opt.pipeline.add_to(*c_opt, true);
    opt.metric.add_to(*c_opt);
    c_opt->add_option("--bundle", opt.bundle)->required()->check(CLI::ExistingFile);
    c_opt->add_option("--masks", opt.masks)->check(CLI::ExistingFile);
    c_opt->add_option("--max-evals", opt.max_evals)->capture_default_str();
    c_opt->add_option("--step-size", opt.step_size)->capture_default_str();
    c_opt->add_option("--init-family", opt.init_family)->capture_default_str()->check(kFamilyNames);
    c_opt->add_option("--init-center", opt.init_center, "Default: steps / 5");
    c_opt->add_option("--init-scale", opt.init_scale)->capture_default_str();
    c_opt->add_option("--out", opt.out, "Best schedule CSV (default stdout)");
    c_opt->add_option("--trace-dir", opt.trace_dir, "Directory for the evaluation trace");

    SweepArgs sw;
    auto* c_sw = app.add_subcommand("sweep", "Evaluate a grid of schedule families");
    sw.pipeline.add_to(*c_sw, true);
    sw.metric.add_to(*c_sw);
    c_sw->add_option("--bundle", sw.bundle)->required()->check(CLI::ExistingFile);
    c_sw->add_option("--family", sw.families, "step01 | arctan | sin (repeatable)")->check(kFamilyNames)
        ->capture_default_str();
    c_sw->add_option("--centers", sw.centers, "a..b or comma list")->required();
    c_sw->add_option("--scales", sw.scales, "a..b or comma list")->capture_default_str();
    c_sw->add_option("--num-seeds", sw.num_seeds, "Seed pairs averaged per grid point")
        ->capture_default_str();
    c_sw->add_option("--masks", sw.masks)->check(CLI::ExistingFile);
    c_sw->add_option("--out", sw.out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*c_dec) {
            return do_decompose(dec, out);
        }
        if (*c_sch) {
            return do_schedule(sch, out);
        }
        if (*c_gen) {
            return do_generate(gen);
        }
        if (*c_ev) {
            return do_evaluate(ev, out);
        }
        if (*c_opt) {
            return do_optimize(opt, out, err);
        }
        if (*c_sw) {
            return do_sweep(sw, out, err);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace couplegen::cli
