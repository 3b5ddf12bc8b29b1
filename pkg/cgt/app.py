"""
Configuración principal de la CLI
Crea el grupo de comandos y registra cada etapa del pipeline
"""

import logging

import click

from cgt import __version__
from cgt.config.config import Config


def create_app():
    """Factory para crear la aplicación (grupo de comandos click)"""

    @click.group(name="cgt", help="Detección de anomalías guiada por un grafo causal")
    @click.version_option(__version__, prog_name="cgt")
    @click.option("--log-level", default=None, help="Nivel de logging (por defecto CGT_LOG_LEVEL)")
    def cli(log_level):
        logging.basicConfig(
            level=(log_level or Config.LOG_LEVEL).upper(),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )

    # Registrar comandos (una etapa por comando)
    register_commands(cli)

    return cli


def register_commands(cli):
    """Registra todos los comandos del pipeline"""
    from cgt.commands import attribution_commands
    from cgt.commands import data_commands
    from cgt.commands import detection_commands
    from cgt.commands import model_commands
    from cgt.commands import pipeline_commands

    cli.add_command(data_commands.synth_command)
    cli.add_command(data_commands.discover_command)
    cli.add_command(model_commands.train_command)
    cli.add_command(model_commands.score_command)
    cli.add_command(detection_commands.threshold_command)
    cli.add_command(detection_commands.evaluate_command)
    cli.add_command(detection_commands.ablation_command)
    cli.add_command(attribution_commands.attribute_command)
    cli.add_command(pipeline_commands.pipeline_command)
    cli.add_command(pipeline_commands.check_command)
