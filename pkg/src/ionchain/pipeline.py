"""Chain -> modes -> tensors -> closed form, built once and shared."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .equilibrium import IonChain, solve_equilibrium
from .modes import NormalModes, modes_from_chain
from .perturbation import CORRECTED, ClosedForm, closed_form
from .tensors import ModeTensors, PositionTensors, UnstableModesError, mode_tensors, position_tensors
from .units import ScaleSet, TrapConfig, derive_scales


@dataclass
class Pipeline:
    config: TrapConfig
    coefficients: object = CORRECTED

    @cached_property
    def scales(self) -> ScaleSet:
        return derive_scales(self.config)

    @cached_property
    def chain(self) -> IonChain:
        return solve_equilibrium(self.config)

    @cached_property
    def modes(self) -> NormalModes:
        return modes_from_chain(self.chain, self.config)

    @cached_property
    def positions(self) -> PositionTensors:
        return position_tensors(self.chain)

    @cached_property
    def tensors(self) -> ModeTensors:
        if not self.modes.stable:
            raise UnstableModesError(
                f"linear chain of {self.config.n_ions} ions is unstable "
                f"(soft branch {', '.join(self.modes.unstable_branches)})"
            )
        return mode_tensors(self.positions, self.modes, self.scales)

    @cached_property
    def form(self) -> ClosedForm:
        return closed_form(self.tensors, self.modes, self.scales, self.coefficients)
