# This file is part of radfact_rerank.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

from __future__ import annotations

__all__ = (
    "BOS_TOKEN",
    "EOS_TOKEN",
    "ENT_TOKEN",
    "RESERVED_SPELLINGS",
    "OBSERVATIONS",
    "OBSERVATION_KEYWORDS",
    "ANATOMY_VOCABULARY",
    "OBSERVATION_VOCABULARY",
    "ENDPOINT_ENV_VAR",
    "DEFAULT_TIMEOUT",
    "DEFAULT_RETRIES",
    "DEFAULT_BACKOFF",
    "DEFAULT_MAX_IN_FLIGHT",
    "DEFAULT_CANDIDATES",
)

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
ENT_TOKEN = "[ENT]"

# Every special-token spelling of the linearized form; none of these may
# appear inside an entity surface.
RESERVED_SPELLINGS = (
    BOS_TOKEN,
    EOS_TOKEN,
    ENT_TOKEN,
    "[ANAT-DP]",
    "[OBS-DP]",
    "[OBS-U]",
    "[OBS-DA]",
    "[REL]",
    "[NA]",
)

# Slot order of observation indicator vectors.
OBSERVATIONS = (
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
)

# Entity surfaces that switch on an observation slot when they are stated as
# present or uncertain in synthetic summaries.
OBSERVATION_KEYWORDS = {
    "widened": "Enlarged Cardiomediastinum",
    "cardiomegaly": "Cardiomegaly",
    "enlarged": "Cardiomegaly",
    "opacity": "Lung Opacity",
    "opacities": "Lung Opacity",
    "nodule": "Lung Lesion",
    "mass": "Lung Lesion",
    "edema": "Edema",
    "consolidation": "Consolidation",
    "pneumonia": "Pneumonia",
    "atelectasis": "Atelectasis",
    "pneumothorax": "Pneumothorax",
    "effusion": "Pleural Effusion",
    "thickening": "Pleural Other",
    "fracture": "Fracture",
    "fractures": "Fracture",
    "tube": "Support Devices",
    "wires": "Support Devices",
    "pacemaker": "Support Devices",
}

ANATOMY_VOCABULARY = (
    "lungs",
    "lung",
    "pleural",
    "cardiac",
    "cardiopulmonary",
    "mediastinal",
    "hilar",
    "contours",
    "base",
    "apex",
    "rib",
    "pulmonary",
    "vasculature",
    "silhouette",
    "right",
    "left",
    "bibasilar",
    "retrocardiac",
)

OBSERVATION_VOCABULARY = (
    "acute",
    "process",
    "effusion",
    "pneumothorax",
    "opacity",
    "consolidation",
    "edema",
    "atelectasis",
    "cardiomegaly",
    "enlarged",
    "widened",
    "nodule",
    "mass",
    "pneumonia",
    "fracture",
    "thickening",
    "tube",
    "wires",
    "pacemaker",
    "clear",
    "unremarkable",
    "stable",
    "mild",
    "moderate",
    "hazy",
    "unchanged",
)

ENDPOINT_ENV_VAR = "RADFACT_GENERATOR_ENDPOINT"
DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 2
DEFAULT_BACKOFF = 0.5
DEFAULT_MAX_IN_FLIGHT = 4

# Candidate pool size kept per report by the first stage.
DEFAULT_CANDIDATES = 10
