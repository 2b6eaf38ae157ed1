from pharmonic.cli import field_commands, render_commands, solver_commands, spectral_commands

COMMAND_GROUPS = (spectral_commands, field_commands, solver_commands, render_commands)
