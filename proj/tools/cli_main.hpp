#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "res2net/res2net.hpp"

namespace res2net::cli {

inline NetworkSpec load_spec(const std::string& arg) {
  namespace fs = std::filesystem;
  if (fs::exists(arg) && fs::is_regular_file(arg)) {
    std::ifstream in(arg);
    if (!in) throw IoError("cannot open config: " + arg);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    // Layer-per-line spec files start with input/stem/block lines; the
    // key=value grammar always carries a template= line.
    if (text.find("template") != std::string::npos) {
      return build_network(parse_config_text(text));
    }
    return from_text(text);
  }
  return build_network(parse_shorthand(arg));
}

inline Dataset load_dataset(const std::string& arg, Split split,
                            std::size_t limit, int classes, int samples,
                            int image_size, std::uint64_t seed) {
  if (arg == "synthetic") {
    return gen_synthetic_multiscale(samples, classes, image_size, seed);
  }
  return load_cifar100(arg, split, limit);
}

inline ChannelStats stats_from_records(const std::vector<WeightRecord>& recs) {
  ChannelStats st;
  for (const auto& r : recs) {
    if (r.name == "meta.norm_mean") st.mean = r.data;
    if (r.name == "meta.norm_stddev") st.stddev = r.data;
  }
  if (st.mean.empty() || st.stddev.empty()) {
    throw Error("weight file has no normalization stats "
                "(meta.norm_mean / meta.norm_stddev)");
  }
  return st;
}

inline std::string default_cam_layer(const NetworkSpec& spec) {
  return "stage" + std::to_string(spec.stages.size()) + ".block" +
         std::to_string(spec.stages.back().blocks) + ".out";
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Res2Net multi-scale block: analysis, training and "
               "inspection tools"};
  app.require_subcommand(1);

  std::string config;
  std::string data_arg;
  std::string weights_path;
  std::string out_path;
  std::string image_path;
  std::string layer;
  std::string format = "table";
  int res = 224;
  int scale = 4;
  int wmin = 1, wmax = 128;
  int input_size = 15;
  int epochs = 60;
  int batch = 32;
  int limit = 0;
  int samples = 256;
  int image_size = 24;
  int iters = 10;
  int class_id = 0;
  double lr = 0.1, wd = 1e-4, momentum = 0.9;
  int lr_step = 30;
  double eps = 1e-5, threshold = 1e-4;
  double stop_acc = 0.0;
  bool augment = false;
  std::uint64_t seed = 42;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("config", config,
                    "model config: shorthand (res2net50-26w4s), key=value "
                    "file, or layer-per-line spec file")
        ->required();
  };

  auto* c_params = app.add_subcommand("params", "parameter counts per layer");
  add_config(c_params);
  c_params->add_option("--format", format, "table or tsv");

  auto* c_flops = app.add_subcommand("flops", "multiply-accumulate counts");
  add_config(c_flops);
  c_flops->add_option("--res", res, "input resolution")->required();
  c_flops->add_option("--format", format, "table or tsv");

  auto* c_solve = app.add_subcommand(
      "solve", "width preserving ResNet-50 complexity at a given scale");
  c_solve->add_option("--scale", scale, "scale s")->required();
  c_solve->add_option("--min-width", wmin, "search range lower bound");
  c_solve->add_option("--max-width", wmax, "search range upper bound");

  auto* c_rf = app.add_subcommand(
      "rf", "receptive-field profile of the stage-1 block (theory + oracle)");
  add_config(c_rf);
  c_rf->add_option("--input-size", input_size, "odd oracle input size");
  c_rf->add_option("--seed", seed, "seed for the positive-weight oracle");

  auto* c_gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the stage-1 block (binary64)");
  add_config(c_gradcheck);
  c_gradcheck->add_option("--seed", seed, "parameter seed");
  c_gradcheck->add_option("--eps", eps, "central-difference step");
  c_gradcheck->add_option("--threshold", threshold, "max relative error");

  auto* c_train = app.add_subcommand("train", "desk-scale SGD training");
  add_config(c_train);
  c_train->add_option("--data", data_arg, "CIFAR-100 path or 'synthetic'")
      ->required();
  c_train->add_option("--out", out_path, "output weight file")->required();
  c_train->add_option("--epochs", epochs, "epochs");
  c_train->add_option("--batch", batch, "batch size");
  c_train->add_option("--lr", lr, "initial learning rate");
  c_train->add_option("--wd", wd, "weight decay");
  c_train->add_option("--momentum", momentum, "momentum");
  c_train->add_option("--lr-step", lr_step, "epochs between /10 decays");
  c_train->add_option("--seed", seed, "seed");
  c_train->add_option("--limit", limit, "truncate dataset (0 = all)");
  c_train->add_option("--samples", samples, "synthetic sample count");
  c_train->add_option("--image-size", image_size, "synthetic image size");
  c_train->add_option("--stop-acc", stop_acc,
                      "stop once train accuracy reaches this (0 = off)");
  c_train->add_flag("--augment", augment, "random flip + pad-and-crop");

  auto* c_eval = app.add_subcommand("eval", "top-1/top-5 error");
  add_config(c_eval);
  c_eval->add_option("--weights", weights_path, "R2NW weight file")->required();
  c_eval->add_option("--data", data_arg, "CIFAR-100 path or 'synthetic'")
      ->required();
  c_eval->add_option("--limit", limit, "truncate dataset (0 = all)");
  c_eval->add_option("--samples", samples, "synthetic sample count");
  c_eval->add_option("--image-size", image_size, "synthetic image size");
  c_eval->add_option("--seed", seed, "synthetic dataset seed");

  auto* c_cam = app.add_subcommand("cam", "Grad-CAM heat map (PGM)");
  add_config(c_cam);
  c_cam->add_option("--weights", weights_path, "R2NW weight file")->required();
  c_cam->add_option("--image", image_path, "input image (P6 PPM)")->required();
  c_cam->add_option("--class", class_id, "target class id")->required();
  c_cam->add_option("--layer", layer, "target activation layer");
  c_cam->add_option("--out", out_path, "output PGM path");

  auto* c_bench = app.add_subcommand("bench", "forward-pass timing (local "
                                              "measurement only)");
  add_config(c_bench);
  c_bench->add_option("--res", res, "input resolution")->required();
  c_bench->add_option("--iters", iters, "iterations");
  c_bench->add_option("--seed", seed, "parameter seed");

  auto* c_spec = app.add_subcommand("spec", "dump the layer-per-line spec");
  add_config(c_spec);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (c_params->parsed()) {
      const ComplexityReport rep = count_params(load_spec(config));
      std::cout << (format == "tsv" ? rep.tsv() : rep.table());
    } else if (c_flops->parsed()) {
      const ComplexityReport rep = count_macs(load_spec(config), res);
      std::cout << (format == "tsv" ? rep.tsv() : rep.table());
    } else if (c_solve->parsed()) {
      const NetworkSpec base = build_network(parse_shorthand("resnet50"));
      std::cout << "w=" << solve_width_for_scale(base, scale, wmin, wmax)
                << "\n";
    } else if (c_rf->parsed()) {
      const NetworkSpec spec = load_spec(config);
      Res2NetBlockConfig cfg =
          spec.block_config(0, spec.stages[0].blocks > 1 ? 1 : 0);
      cfg.use_se = false;  // the oracle precondition
      const auto params =
          make_positive_block_params<float>(cfg, "block", seed);
      const ReceptiveFieldProfile profile =
          rf_oracle(cfg, params, "block", input_size);
      std::cout << profile.str();
      const int center = input_size / 2;
      for (std::size_t i = 0; i < profile.theory_side.size(); ++i) {
        const int r = (profile.theory_side[i] - 1) / 2;
        const SupportBox want{center - r, center + r, center - r, center + r};
        if (!(profile.measured[i] == want)) {
          std::cout << "mismatch at split " << (i + 1) << "\n";
          return 2;
        }
      }
      std::cout << "measured support matches theory on every split\n";
    } else if (c_gradcheck->parsed()) {
      const NetworkSpec spec = load_spec(config);
      const Res2NetBlockConfig cfg =
          spec.block_config(0, spec.stages[0].blocks > 1 ? 1 : 0);
      Rng rng(seed);
      ParamStore<double> store;
      init_block_params(store, "block", cfg, rng);
      store.add("input",
                Tensor<double>::randn(Shape4{2, cfg.in_channels, 5, 5}, rng),
                true, false);
      const Tensor<double> proj = Tensor<double>::randn(
          Shape4{2, cfg.out_channels, 5, 5}, rng);
      const bool bottleneck = spec.kind == BlockKind::bottleneck;
      GradCheckFragment fragment =
          [&](Tape<double>& t, const SlotMap& slots,
              const ParamStore<double>& p) {
            const int x = slots.at("input");
            const int out =
                bottleneck
                    ? bottleneck_forward(t, x, cfg, slots, p, "block",
                                         BnMode::train)
                    : res2net_block_forward(t, x, cfg, slots, p, "block",
                                            BnMode::train);
            return t.weighted_sum(out, proj);
          };
      const GradCheckReport rep =
          grad_check(store, fragment, eps, threshold, seed);
      std::cout << rep.str();
      return rep.pass() ? 0 : 2;
    } else if (c_train->parsed()) {
      const NetworkSpec spec = load_spec(config);
      Dataset data = load_dataset(data_arg, Split::train,
                                  static_cast<std::size_t>(limit),
                                  spec.classes, samples, image_size, seed);
      const ChannelStats st = channel_stats(data.images);
      standardize(data.images, st);
      ParamStore<float> params = init_network_params<float>(spec, seed);
      TrainConfig cfg;
      cfg.lr0 = lr;
      cfg.weight_decay = wd;
      cfg.momentum = momentum;
      cfg.lr_step = lr_step;
      cfg.epochs = epochs;
      cfg.batch_size = batch;
      cfg.seed = seed;
      cfg.augment = augment;
      cfg.stop_at_accuracy = stop_acc;
      const auto log = train(spec, params, data, cfg);
      for (const auto& e : log) {
        std::cout << "epoch " << e.epoch << "  loss " << e.loss << "  acc "
                  << e.accuracy << "  lr " << e.lr << "\n";
      }
      const int c = data.images.shape().c;
      params.add("meta.norm_mean",
                 Tensor<float>(Shape4{c, 1, 1, 1}, st.mean), false, false);
      params.add("meta.norm_stddev",
                 Tensor<float>(Shape4{c, 1, 1, 1}, st.stddev), false, false);
      save_weights(params, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (c_eval->parsed()) {
      const NetworkSpec spec = load_spec(config);
      ParamStore<float> params = init_network_params<float>(spec, seed);
      load_weights(params, weights_path);
      const ChannelStats st =
          stats_from_records(read_weight_file(weights_path));
      Dataset data = load_dataset(data_arg, Split::test,
                                  static_cast<std::size_t>(limit),
                                  spec.classes, samples, image_size, seed);
      standardize(data.images, st);
      const EvalResult r = evaluate(spec, params, data);
      std::cout << "top1_error=" << r.top1_error << "\n"
                << "top5_error=" << r.top5_error << "\n";
    } else if (c_cam->parsed()) {
      const NetworkSpec spec = load_spec(config);
      ParamStore<float> params = init_network_params<float>(spec, seed);
      load_weights(params, weights_path);
      const ChannelStats st =
          stats_from_records(read_weight_file(weights_path));
      Tensor<float> image = read_ppm(image_path);
      standardize(image, st);
      if (layer.empty()) layer = default_cam_layer(spec);
      const GradCamResult cam = grad_cam(spec, params, image, class_id, layer);
      int ph = 0, pw = 0;
      float best = -1.0f;
      const Shape4 us = cam.upsampled.shape();
      for (int h = 0; h < us.h; ++h) {
        for (int w = 0; w < us.w; ++w) {
          if (cam.upsampled.at(0, 0, h, w) > best) {
            best = cam.upsampled.at(0, 0, h, w);
            ph = h;
            pw = w;
          }
        }
      }
      if (out_path.empty()) out_path = "cam.pgm";
      write_pgm(cam.upsampled, out_path);
      std::cout << "layer=" << layer << " peak=(" << ph << "," << pw
                << ") value=" << best << "\n"
                << "wrote " << out_path << "\n";
    } else if (c_bench->parsed()) {
      const NetworkSpec spec = load_spec(config);
      const ParamStore<float> params = init_network_params<float>(spec, seed);
      const Tensor<float> input =
          Tensor<float>::randn(Shape4{1, spec.in_channels, res, res}, seed + 1);
      predict_logits(spec, params, input);  // warm-up
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < iters; ++i) {
        predict_logits(spec, params, input);
      }
      const auto t1 = std::chrono::steady_clock::now();
      const double ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count() /
          std::max(1, iters);
      std::cout << spec.name << " @ " << res << "x" << res << ": " << ms
                << " ms/forward over " << iters << " iters\n";
    } else if (c_spec->parsed()) {
      std::cout << to_text(load_spec(config));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace res2net::cli
