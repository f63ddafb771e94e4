import logging
import os
from flask import Flask
from flask_sqlalchemy import SQLAlchemy
from flask_migrate import Migrate

db = SQLAlchemy()
migrate = Migrate()

__version__ = "0.1.0"


def create_app(test_config=None):
    app = Flask(__name__)
    app.config.from_pyfile('../config.py')
    if test_config:
        app.config.update(test_config)
    db.init_app(app)
    migrate.init_app(app, db)

    # Physics modules log under "sfgsim"; route them through the app's handlers
    package_logger = logging.getLogger(__name__)
    package_logger.setLevel(app.config.get('LOG_LEVEL', 'INFO'))
    for handler in app.logger.handlers:
        if handler not in package_logger.handlers:
            package_logger.addHandler(handler)

    from .api import api as api_blueprint
    app.register_blueprint(api_blueprint)

    from .cli import register_commands
    register_commands(app)

    # Ensure the results folder exists
    os.makedirs(app.config['RESULTS_FOLDER'], exist_ok=True)

    return app
