"""Train the toy WaveNet-VNN controller and compare it with TD-FxLMS.

Trains on 60 s of synthetic pink and engine noise through the saturating
plant, then scores the network and a converged TD-FxLMS(512) on a held-out
pink segment. Takes a few minutes on one core.

    python demos/train_toy_controller.py --eta2 0.1 --output toy.wvnn
"""
import argparse
import time

import numpy as np

from nlanc.acoustics import build_plant
from nlanc.data_io import synth_noise, synthetic_corpus
from nlanc.dsp import dba_delta_db, nmse_db
from nlanc.harness import AlgorithmSpec, Scenario, StepSearch, converge, search_step
from nlanc.wavenet import ModelConfig, TrainConfig, evaluate_controller, save_checkpoint, train_model


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--eta2", type=float, default=0.5)
    parser.add_argument("--epochs", type=int, default=80)
    parser.add_argument("--output", default="toy.wvnn")
    args = parser.parse_args()

    plant = build_plant(args.eta2)
    dataset = synthetic_corpus(["pink", "engine_harmonics"], 30.0, seed=1)
    held_out = np.asarray(synth_noise("pink", 3.0, seed=99))
    config = TrainConfig(
        model=ModelConfig(channels=8, skip_channels=8, stacks=1, layers_per_stack=10,
                          vnn_kernel=1),
        epochs=args.epochs, learning_rate=3e-3, lr_decay=0.97, crop=8000, seed=0)

    start = time.perf_counter()

    def progress(epoch, params, loss):
        if epoch % 10 == 0:
            e, d = evaluate_controller(held_out, plant, params)
            print(f"epoch {epoch:3d}  train loss {loss:7.2f}  held-out NMSE {nmse_db(e, d):7.2f} dB"
                  f"  ({time.perf_counter() - start:.0f} s)", flush=True)

    result = train_model(dataset, plant, config, callback=progress)
    save_checkpoint(result.params, args.output)
    e, d = evaluate_controller(held_out, plant, result.params)
    print(f"WaveNet-VNN   NMSE {nmse_db(e, d):7.2f} dB   dBA {dba_delta_db(e, d):7.2f}")

    scenario = Scenario(held_out, d, plant)
    spec = AlgorithmSpec("td", "td_fxlms", 512)
    report = converge(spec, scenario, search_step(spec, scenario, StepSearch())).report
    print(f"TD-FxLMS(512) NMSE {report.nmse_db:7.2f} dB   "
          f"dBA {dba_delta_db(report.error, report.disturbance):7.2f}")


if __name__ == "__main__":
    main()
